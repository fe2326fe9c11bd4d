#include <iostream>

#include <CLI11.hpp>

#include "spae/commands.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    int64_t seed = -1;
    std::string out;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "run configuration file (key = value lines)");
    cmd->add_option("--seed", flags.seed, "RNG seed (overrides config)");
    cmd->add_option("--out", flags.out, "output prefix/directory (overrides config)");
    cmd->add_option("--device-threads", flags.threads, "worker thread count (1 = serial kernels)");
}

spae::RunConfig resolve(const CommonFlags& flags) {
    spae::RunConfig cfg;
    if (!flags.config_path.empty()) cfg = spae::parse_config_file(flags.config_path);
    if (flags.seed >= 0) cfg.seed = static_cast<uint64_t>(flags.seed);
    if (!flags.out.empty()) cfg.out = flags.out;
    if (flags.threads > 0) cfg.threads = flags.threads;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"spatially-sparse convolutional autoencoder engine"};
    app.require_subcommand(1);

    CommonFlags train_ae_flags;
    auto* train_ae = app.add_subcommand("train-ae", "train an autoencoder under the hierarchical loss");
    add_common(train_ae, train_ae_flags);

    CommonFlags train_head_flags;
    std::string encoder_ckpt;
    std::string head_kind;
    int frozen_flag = -1;
    auto* train_head = app.add_subcommand("train-head", "train a classifier head or baseline");
    add_common(train_head, train_head_flags);
    train_head->add_option("--encoder", encoder_ckpt, "autoencoder checkpoint (empty = random init)");
    train_head->add_option("--head", head_kind, "linear|mlp|nonconvnet|unet|shapectx");
    train_head->add_option("--frozen", frozen_flag, "1 = freeze the encoder, 0 = train jointly");

    CommonFlags eval_flags;
    std::string eval_ckpt;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common(eval_cmd, eval_flags);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required();

    CommonFlags recon_flags;
    std::string recon_ckpt;
    int recon_count = 0;
    auto* recon_cmd = app.add_subcommand("reconstruct", "dump test-mode reconstruction patterns");
    add_common(recon_cmd, recon_flags);
    recon_cmd->add_option("--checkpoint", recon_ckpt, "autoencoder checkpoint")->required();
    recon_cmd->add_option("--count", recon_count, "number of samples to dump");

    CommonFlags gen_flags;
    std::string gen_style;
    int gen_count = 0;
    auto* gen_cmd = app.add_subcommand("gen-synth", "write a synthetic dataset to disk");
    add_common(gen_cmd, gen_flags);
    gen_cmd->add_option("--style", gen_style, "polyline|shell|random|digits");
    gen_cmd->add_option("--count", gen_count, "sample count");

    std::string conv_in, conv_out, conv_format = "pendigits";
    auto* conv_cmd = app.add_subcommand("convert-strokes", "convert stroke data to the canonical format");
    conv_cmd->add_option("--input", conv_in, "input file")->required();
    conv_cmd->add_option("--out", conv_out, "output file")->required();
    conv_cmd->add_option("--format", conv_format, "pendigits|canonical");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_ae->parsed()) {
            auto cfg = resolve(train_ae_flags);
            auto result = spae::cmd_train_autoencoder(cfg);
            std::cout << "checkpoint=" << result.checkpoint_path << "\n"
                      << "log=" << result.log_path << "\n"
                      << "final_mse=" << result.final_mse << "\n"
                      << "sparsifier_accuracy=" << result.sparsifier_accuracy << "\n";
        } else if (train_head->parsed()) {
            auto cfg = resolve(train_head_flags);
            if (!head_kind.empty()) cfg.head_kind = head_kind;
            if (frozen_flag >= 0) cfg.head_frozen = frozen_flag != 0;
            cfg.validate();
            auto result = spae::cmd_train_head(cfg, encoder_ckpt);
            std::cout << "checkpoint=" << result.checkpoint_path << "\n"
                      << "log=" << result.log_path << "\n"
                      << "final_train_error=" << result.final_train_error << "\n";
        } else if (eval_cmd->parsed()) {
            auto cfg = resolve(eval_flags);
            auto result = spae::cmd_eval(cfg, eval_ckpt);
            std::cout << "report=" << result.report_txt_path << "\n";
            if (result.classification_error >= 0) {
                std::cout << "classification_error=" << result.classification_error << "\n";
            }
            if (result.mean_iou >= 0) std::cout << "mean_iou=" << result.mean_iou << "\n";
            if (result.kind == "autoencoder") {
                std::cout << "mse=" << result.mse << "\n"
                          << "pattern_iou=" << result.confusion.iou() << "\n";
            }
        } else if (recon_cmd->parsed()) {
            auto cfg = resolve(recon_flags);
            if (recon_count > 0) cfg.recon_count = recon_count;
            cfg.validate();
            auto result = spae::cmd_reconstruct(cfg, recon_ckpt);
            std::cout << "out_dir=" << result.out_dir << "\n";
            for (size_t s = 0; s < result.decoded_counts.size(); ++s) {
                std::cout << "sample" << s << " decoded=";
                for (size_t i = 0; i < result.decoded_counts[s].size(); ++i) {
                    std::cout << (i ? "," : "") << result.decoded_counts[s][i];
                }
                std::cout << " encoder=";
                for (size_t i = 0; i < result.encoder_counts[s].size(); ++i) {
                    std::cout << (i ? "," : "") << result.encoder_counts[s][i];
                }
                std::cout << "\n";
            }
        } else if (gen_cmd->parsed()) {
            auto cfg = resolve(gen_flags);
            if (!gen_style.empty()) cfg.synth_style = gen_style;
            if (gen_count > 0) {
                cfg.synth_count = gen_count;
                cfg.digits_train = gen_count;
            }
            cfg.validate();
            spae::cmd_gen_synth(cfg);
            std::cout << "out=" << cfg.out << "\n";
        } else if (conv_cmd->parsed()) {
            spae::cmd_convert_strokes(conv_in, conv_out, conv_format);
            std::cout << "out=" << conv_out << "\n";
        }
    } catch (const spae::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return spae::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
