#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "procspace/control.hpp"
#include "procspace/core.hpp"
#include "procspace/hjb.hpp"
#include "procspace/meanfield.hpp"
#include "procspace/noise.hpp"

namespace procspace {

// Flat key = value configuration with '#' comments. Keys other than model.* must be known.
class Config {
public:
    static Config parse(const std::string& text, const std::string& origin = "<string>");
    static Config load(const std::string& path);

    // "key=value"; throws ParseError (line 0) when malformed or the key is unknown.
    void set_override(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::string get(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    std::vector<std::string> get_list(const std::string& key) const;

    // Checks value ranges (steps >= 1, particle counts >= 1, ...); throws ParseError with the line.
    void validate() const;

    const std::map<std::string, std::string>& values() const noexcept { return values_; }
    std::string origin() const { return origin_; }

private:
    int line_of(const std::string& key) const;
    std::map<std::string, std::string> values_;
    std::map<std::string, int> lines_;
    std::string origin_;
};

bool known_config_key(const std::string& key);

struct Scenario {
    std::string key;
    std::string description;
    CoefficientSet coeffs;
    std::optional<StateCoefficients> state;      // decoupled one-dimensional data for the FD oracle
    std::optional<CheckCoefficientSet> check;    // mean-field data
    // Exact value at the discrete level when known.
    std::function<double(double t, const ProcessEnsemble& xi)> closed_form;
    bool identity_volatility = false;
    bool lipschitz_payoff = false;  // V is 1-Lipschitz in xi for the L2 norm
    ActionGrid actions;
};

std::vector<std::string> scenario_keys();
std::string scenario_description(const std::string& key);
// Throws ParameterError for an unknown key.
Scenario make_scenario(const std::string& key, const Config& cfg);

// Objects built from a config: grid, noise, initial ensemble and control family.
struct Setup {
    Scenario scenario;
    TimeGrid grid;
    double t = 0.0;
    int k0 = 0;
    NoiseBundle noise;
    ProcessEnsemble base;  // before tree expansion
    ProcessEnsemble xi;
    std::uint64_t seed = 0;
    int batches = 16;
};

Setup make_setup(const Config& cfg);
// Initial ensemble with the config's init.* keys; `stream` separates independent draws.
ProcessEnsemble make_initial(const Config& cfg, const TimeGrid& grid, int dim, int n_common, int n_idio,
                             std::uint32_t stream);
// Family named by control.kind, starting at step `first`.
ControlFamily make_family(const Config& cfg, const Setup& s, int first);

}  // namespace procspace
