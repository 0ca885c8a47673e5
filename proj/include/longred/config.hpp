#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>

#include "longred/model.hpp"
#include "longred/positions.hpp"
#include "longred/rope.hpp"
#include "longred/trainer.hpp"

namespace longred {

// Flat `key = value` file with dotted section names, '#' comments. Unknown
// and duplicate keys are hard errors: a silent typo would invalidate a run.
class KvConfig {
  public:
    static KvConfig parse_file(const std::filesystem::path& path);
    static KvConfig parse_string(const std::string& text);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key);
    std::string get_string(const std::string& key, const std::string& fallback);
    std::int64_t get_int(const std::string& key);
    std::int64_t get_int(const std::string& key, std::int64_t fallback);
    double get_double(const std::string& key);
    double get_double(const std::string& key, double fallback);

    // Errors if any parsed key was never consumed.
    void finish() const;

  private:
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    std::string dtype;  // f32 | f64
    TrainPlan train;
    ModelConfig model;          // used when init is empty
    std::filesystem::path init;     // optional student checkpoint
    std::filesystem::path teacher;  // required in longred mode
    ExtensionSpec extension;
    SkipConfig skip;
    std::filesystem::path data_d1, data_d2, data_d3;

    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_kv(KvConfig& kv);
    void validate() const;
};

}  // namespace longred
