#ifndef SPAE_CONFIG_HPP
#define SPAE_CONFIG_HPP

#include <string>
#include <vector>

#include "spae/data.hpp"
#include "spae/models.hpp"

namespace spae {

/// Run configuration parsed from line-oriented `key = value` text with `#`
/// comments. Every numeric field is range-checked at parse time; CLI flags
/// override file values.
struct RunConfig {
    // dataset
    std::string dataset_kind = "synth"; // synth | digits | strokes | pointcloud
    std::string train_path;
    std::string test_path;
    int grid = 32;
    // synthetic generators
    std::string synth_style = "polyline"; // polyline | shell | random | digits
    int synth_count = 8;
    int synth_test_count = 0;
    int synth_size = 16;
    int synth_d = 2;
    double synth_occupancy = 0.10;
    uint64_t data_seed = 12345;
    int digits_train = 7494;
    int digits_test = 3498;
    // network
    NetworkSpec net;
    // training
    int epochs = 5;
    int64_t steps = 0; // overrides epochs when > 0
    int batch = 8;
    uint64_t seed = 1;
    // optimizer
    std::string opt_kind = "adam";
    double lr = 1e-3;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    // loss
    std::vector<double> loss_weights; // empty = 1.0 per term
    bool monochrome = false;
    // augmentation
    bool augment = true;
    AffineConfig aug;
    // heads / baselines
    std::string head_kind = "linear"; // linear | mlp | nonconvnet | unet | shapectx
    int head_hidden = 512;
    bool head_frozen = true;
    int head_epochs = 5;
    int classes = 10;
    int shapectx_levels = 4;
    // reconstruction export
    int recon_count = 4;
    std::string recon_split = "test"; // test | train
    // misc
    int threads = 1;
    std::string out = "run";
    bool save_optimizer = false;

    void validate() const; // ConfigError on violations
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

} // namespace spae

#endif
