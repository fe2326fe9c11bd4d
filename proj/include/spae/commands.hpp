#ifndef SPAE_COMMANDS_HPP
#define SPAE_COMMANDS_HPP

#include <string>
#include <vector>

#include "spae/checkpoint.hpp"
#include "spae/config.hpp"
#include "spae/metrics.hpp"

namespace spae {

struct TrainAeResult {
    double final_mse = 0;           // global per-site reconstruction MSE on the training set
    double sparsifier_accuracy = 0; // sign-based tp/(tp+fp+fn) over all levels and samples
    std::string checkpoint_path;
    std::string log_path;
};

/// Trains the autoencoder under the hierarchical loss, logging one record
/// per step and one summary per epoch; saves a checkpoint at the end.
TrainAeResult cmd_train_autoencoder(const RunConfig& cfg);

struct TrainHeadResult {
    double final_train_error = 0; // classification error % or per-site error %
    std::string checkpoint_path;
    std::string log_path;
};

/// Trains a classifier head or a baseline on top of an encoder. With an
/// empty checkpoint path the encoder starts from random init: frozen mode
/// gives the burned-in "untrained" baseline, joint mode the fully
/// supervised one. Head kinds `unet` and `shapectx` are standalone
/// baselines and ignore the encoder checkpoint.
TrainHeadResult cmd_train_head(const RunConfig& cfg, const std::string& encoder_ckpt_path);

struct EvalResult {
    std::string kind;
    int64_t samples = 0;
    double classification_error = -1;
    double mean_iou = -1;
    double site_accuracy = -1;
    PatternConfusion confusion; // autoencoder test-mode pattern vs input
    double mse = -1;            // pattern-forced reconstruction MSE
    double mean_occupancy = 0;
    std::string report_txt_path;
    std::string report_json_path;
};

EvalResult cmd_eval(const RunConfig& cfg, const std::string& ckpt_path);

struct ReconstructResult {
    // decoder pattern sizes per sample, coarse to fine (after each Sparsify)
    std::vector<std::vector<int64_t>> decoded_counts;
    // encoder pattern-stack sizes per sample, matching decoder order
    std::vector<std::vector<int64_t>> encoder_counts;
    std::vector<std::string> files;
    std::string out_dir;
};

/// Test-mode (thresholded) decoding dumps: per-scale patterns with TP/FP/FN
/// labels against the encoder patterns, plus input and final-feature clouds,
/// all in the point-cloud text format.
ReconstructResult cmd_reconstruct(const RunConfig& cfg, const std::string& ckpt_path);

void cmd_gen_synth(const RunConfig& cfg);

void cmd_convert_strokes(const std::string& input_path, const std::string& out_path,
                         const std::string& format);

/// Exit-code contract: 0 success, 2 config error, 3 data error,
/// 4 checkpoint error.
int exit_code_for(const Error& e);

// Batched minibatch assembly: single-sample tensors merged with batch index
// = position.
SparseTensor make_batch(const std::vector<const SparseTensor*>& items);

} // namespace spae

#endif
