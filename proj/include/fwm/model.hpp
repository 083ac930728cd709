#pragma once

// Four-level double-lambda medium: two ground states (a, b) at zero energy,
// two excited states (c, d) split by delta_F. Beam F couples a<->c and a<->d,
// beams B and P couple b<->c and b<->d with opposite dipole signs on the
// b<->d leg. All rates and frequencies are in units of the excited-state
// decay rate (gamma_e = 1); frequencies are detunings from the crossover
// frequency omega_co = (omega_c + omega_d)/2.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace fwm {

enum Level : int { level_a = 0, level_b = 1, level_c = 2, level_d = 3 };
constexpr int n_levels = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct LevelScheme {
    double omega_c = -14.5;  // lower excited level, detuning from omega_co
    double omega_d = +14.5;  // upper excited level
    double delta_F = 29.0;   // derived: omega_d - omega_c
    double omega_co = 0.0;   // derived: (omega_c + omega_d) / 2
    int sign_bc = +1;        // dipole sign on b<->c
    int sign_bd = -1;        // dipole sign on b<->d
};

struct FieldSet {
    double omega_F = 0.0;
    double omega_B = 0.0;
    double omega_P = 0.0;
    double rabi_F = 0.01;
    double rabi_B = 0.01;
    double rabi_P = 0.001;
    int dir_F = +1;
    int dir_P = +1;
    int dir_B = -1;  // backward pump counterpropagates
};

struct RelaxationParams {
    double gamma_e = 1.0;         // excited decay rate, the unit
    double gamma_g = 1e-3;        // ground-coherence decay rate
    double branching = 0.5;       // each excited level feeds each ground state
    double transit_feed = 1e-3;   // ground populations equalize at this rate
};

struct DopplerParams {
    double ku = 43.0;   // Doppler width k*u in units of gamma_e
    int n_nodes = 201;  // quadrature nodes, odd so v = 0 is sampled
};

struct ModelConfig {
    LevelScheme levels;
    FieldSet fields;
    RelaxationParams relaxation;
    DopplerParams doppler;
    int truncation = 4;  // max harmonic order N: |a| + |b| <= N
};

namespace detail {

inline void require_finite(std::vector<std::string>& errs, double x, const char* path) {
    if (!std::isfinite(x)) errs.push_back(std::string(path) + " must be finite");
}

}  // namespace detail

// Checks every type invariant, recomputes the derived level fields, and
// returns the normalized config. Throws ConfigError listing all violations.
// Conditions that only restrict the validity regime (rabi_P > rabi_F) are
// reported through `warnings` instead of rejected.
inline ModelConfig validate_config(ModelConfig cfg, std::vector<std::string>* warnings = nullptr) {
    std::vector<std::string> errs;
    using detail::require_finite;

    require_finite(errs, cfg.levels.omega_c, "levels.omega_c");
    require_finite(errs, cfg.levels.omega_d, "levels.omega_d");
    require_finite(errs, cfg.fields.omega_F, "fields.omega_F");
    require_finite(errs, cfg.fields.omega_B, "fields.omega_B");
    require_finite(errs, cfg.fields.omega_P, "fields.omega_P");
    require_finite(errs, cfg.fields.rabi_F, "fields.rabi_F");
    require_finite(errs, cfg.fields.rabi_B, "fields.rabi_B");
    require_finite(errs, cfg.fields.rabi_P, "fields.rabi_P");
    require_finite(errs, cfg.relaxation.gamma_e, "relaxation.gamma_e");
    require_finite(errs, cfg.relaxation.gamma_g, "relaxation.gamma_g");
    require_finite(errs, cfg.relaxation.branching, "relaxation.branching");
    require_finite(errs, cfg.relaxation.transit_feed, "relaxation.transit_feed");
    require_finite(errs, cfg.doppler.ku, "doppler.ku");

    cfg.levels.delta_F = cfg.levels.omega_d - cfg.levels.omega_c;
    cfg.levels.omega_co = 0.5 * (cfg.levels.omega_c + cfg.levels.omega_d);

    if (!(cfg.levels.delta_F > 0.0))
        errs.push_back("levels.delta_F must be > 0 (omega_d must lie above omega_c)");
    if (cfg.levels.sign_bc != +1) errs.push_back("levels.sign_bc must be +1");
    if (cfg.levels.sign_bd != -1) errs.push_back("levels.sign_bd must be -1");

    if (cfg.fields.rabi_F < 0.0) errs.push_back("fields.rabi_F must be >= 0");
    if (cfg.fields.rabi_B < 0.0) errs.push_back("fields.rabi_B must be >= 0");
    if (cfg.fields.rabi_P < 0.0) errs.push_back("fields.rabi_P must be >= 0");
    if (cfg.fields.dir_F != +1) errs.push_back("fields.dir_F must be +1");
    if (cfg.fields.dir_P != +1) errs.push_back("fields.dir_P must be +1");
    if (cfg.fields.dir_B != -cfg.fields.dir_F)
        errs.push_back("fields.dir_B must be -dir_F (backward pump counterpropagates)");

    if (!(cfg.relaxation.gamma_e > 0.0)) errs.push_back("relaxation.gamma_e must be > 0");
    if (!(cfg.relaxation.gamma_g > 0.0)) errs.push_back("relaxation.gamma_g must be > 0");
    if (cfg.relaxation.branching != 0.5) errs.push_back("relaxation.branching must be 1/2 exactly");
    if (!(cfg.relaxation.transit_feed > 0.0)) errs.push_back("relaxation.transit_feed must be > 0");

    if (!(cfg.doppler.ku >= 0.0)) errs.push_back("doppler.ku must be >= 0");
    if (cfg.doppler.n_nodes < 1 || cfg.doppler.n_nodes % 2 == 0)
        errs.push_back("doppler.n_nodes must be an odd positive integer");

    if (cfg.truncation < 1) errs.push_back("truncation must be >= 1");

    if (!errs.empty()) {
        std::ostringstream msg;
        msg << "invalid config:";
        for (const auto& e : errs) msg << "\n  - " << e;
        throw ConfigError(msg.str());
    }

    if (warnings && cfg.fields.rabi_P > cfg.fields.rabi_F)
        warnings->push_back(
            "fields.rabi_P exceeds fields.rabi_F; first-order-in-probe results "
            "are outside their validity regime");
    return cfg;
}

// Field frequencies seen by an atom moving at velocity v (units of the most
// probable speed u): omega_at = omega - dir * ku * v. Co-propagating beams
// shift together, the backward pump shifts oppositely.
struct AtomicFrequencies {
    double f = 0.0;
    double b = 0.0;
    double p = 0.0;
};

inline AtomicFrequencies to_atomic_frame(const FieldSet& fields, double v, double ku) {
    AtomicFrequencies at;
    at.f = fields.omega_F - fields.dir_F * ku * v;
    at.b = fields.omega_B - fields.dir_B * ku * v;
    at.p = fields.omega_P - fields.dir_P * ku * v;
    return at;
}

// --- JSON serialization ------------------------------------------------
//
// The document carries exactly the documented field names; unknown keys are
// rejected. Missing keys keep their defaults so partial configs are usable.

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) { ok = true; break; }
        if (!ok) throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
}

template <typename T>
void get_if_present(const nlohmann::json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("bad value for ") + where + "." + key);
    }
}

}  // namespace detail

inline nlohmann::json to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["levels"] = {{"omega_c", c.levels.omega_c}, {"omega_d", c.levels.omega_d},
                   {"delta_F", c.levels.delta_F}, {"omega_co", c.levels.omega_co},
                   {"sign_bc", c.levels.sign_bc}, {"sign_bd", c.levels.sign_bd}};
    j["fields"] = {{"omega_F", c.fields.omega_F}, {"omega_B", c.fields.omega_B},
                   {"omega_P", c.fields.omega_P}, {"rabi_F", c.fields.rabi_F},
                   {"rabi_B", c.fields.rabi_B},   {"rabi_P", c.fields.rabi_P},
                   {"dir_F", c.fields.dir_F},     {"dir_P", c.fields.dir_P},
                   {"dir_B", c.fields.dir_B}};
    j["relaxation"] = {{"gamma_e", c.relaxation.gamma_e},
                       {"gamma_g", c.relaxation.gamma_g},
                       {"branching", c.relaxation.branching},
                       {"transit_feed", c.relaxation.transit_feed}};
    j["doppler"] = {{"ku", c.doppler.ku}, {"n_nodes", c.doppler.n_nodes}};
    j["truncation"] = c.truncation;
    return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    using detail::check_keys;
    using detail::get_if_present;
    if (!j.is_object()) throw ConfigError("config document must be a JSON object");
    check_keys(j, {"levels", "fields", "relaxation", "doppler", "truncation"}, "config");

    ModelConfig c;
    bool transit_given = false;
    if (j.contains("levels")) {
        const auto& l = j.at("levels");
        check_keys(l, {"omega_c", "omega_d", "delta_F", "omega_co", "sign_bc", "sign_bd"},
                   "levels");
        get_if_present(l, "omega_c", c.levels.omega_c, "levels");
        get_if_present(l, "omega_d", c.levels.omega_d, "levels");
        get_if_present(l, "delta_F", c.levels.delta_F, "levels");
        get_if_present(l, "omega_co", c.levels.omega_co, "levels");
        get_if_present(l, "sign_bc", c.levels.sign_bc, "levels");
        get_if_present(l, "sign_bd", c.levels.sign_bd, "levels");
    }
    if (j.contains("fields")) {
        const auto& f = j.at("fields");
        check_keys(f, {"omega_F", "omega_B", "omega_P", "rabi_F", "rabi_B", "rabi_P",
                       "dir_F", "dir_P", "dir_B"}, "fields");
        get_if_present(f, "omega_F", c.fields.omega_F, "fields");
        get_if_present(f, "omega_B", c.fields.omega_B, "fields");
        get_if_present(f, "omega_P", c.fields.omega_P, "fields");
        get_if_present(f, "rabi_F", c.fields.rabi_F, "fields");
        get_if_present(f, "rabi_B", c.fields.rabi_B, "fields");
        get_if_present(f, "rabi_P", c.fields.rabi_P, "fields");
        get_if_present(f, "dir_F", c.fields.dir_F, "fields");
        get_if_present(f, "dir_P", c.fields.dir_P, "fields");
        get_if_present(f, "dir_B", c.fields.dir_B, "fields");
    }
    if (j.contains("relaxation")) {
        const auto& r = j.at("relaxation");
        check_keys(r, {"gamma_e", "gamma_g", "branching", "transit_feed"}, "relaxation");
        get_if_present(r, "gamma_e", c.relaxation.gamma_e, "relaxation");
        get_if_present(r, "gamma_g", c.relaxation.gamma_g, "relaxation");
        get_if_present(r, "branching", c.relaxation.branching, "relaxation");
        transit_given = r.contains("transit_feed");
        get_if_present(r, "transit_feed", c.relaxation.transit_feed, "relaxation");
    }
    if (j.contains("doppler")) {
        const auto& d = j.at("doppler");
        check_keys(d, {"ku", "n_nodes"}, "doppler");
        get_if_present(d, "ku", c.doppler.ku, "doppler");
        get_if_present(d, "n_nodes", c.doppler.n_nodes, "doppler");
    }
    get_if_present(j, "truncation", c.truncation, "config");
    if (!transit_given) c.relaxation.transit_feed = c.relaxation.gamma_g;
    return c;
}

// Stable 64-bit hash of the resolved config (canonical serialized form),
// used to stamp output files so a spectrum can be traced back to its inputs.
inline std::string config_hash(const ModelConfig& c) {
    const std::string s = to_json(c).dump();
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace fwm
