#include "spae/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "spae/autograd.hpp"
#include "spae/models.hpp"

namespace fs = std::filesystem;

namespace spae {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::scientific << std::setprecision(9) << v;
    return os.str();
}

// ------------------------------------------------------------------ dataset

struct Dataset {
    bool segmentation = false;
    std::vector<StrokeSample> strokes; // kept for per-epoch augmentation
    std::vector<SparseTensor> tensors; // base (unaugmented) tensors
    std::vector<int> labels;
    std::vector<std::vector<int>> site_labels;
    int classes = 0;

    size_t size() const { return tensors.size(); }
};

Dataset load_dataset(const RunConfig& cfg, bool train) {
    Dataset ds;
    if (cfg.dataset_kind == "synth" && cfg.synth_style != "digits") {
        SynthStyle style = cfg.synth_style == "shell"    ? SynthStyle::Shell
                           : cfg.synth_style == "random" ? SynthStyle::Random
                                                         : SynthStyle::Polyline;
        const int count = train ? cfg.synth_count
                                : (cfg.synth_test_count > 0 ? cfg.synth_test_count : cfg.synth_count);
        const uint64_t base = train ? cfg.data_seed : cfg.data_seed ^ 0x7e57da7aull;
        ds.segmentation = true;
        ds.classes = cfg.classes;
        for (int i = 0; i < count; ++i) {
            SynthSample s = synth_sparse(cfg.synth_d, cfg.synth_size, style,
                                         mix_seed(base, static_cast<uint64_t>(i)),
                                         cfg.synth_occupancy);
            std::vector<int> lab(s.site_labels.size());
            for (size_t j = 0; j < lab.size(); ++j) lab[j] = s.site_labels[j] % cfg.classes;
            ds.tensors.push_back(std::move(s.tensor));
            ds.site_labels.push_back(std::move(lab));
        }
    } else if (cfg.dataset_kind == "digits" ||
               (cfg.dataset_kind == "synth" && cfg.synth_style == "digits")) {
        const int count = train ? cfg.digits_train : cfg.digits_test;
        const uint64_t base = train ? cfg.data_seed : cfg.data_seed ^ 0xd161757e57ull;
        ds.strokes = synth_digit_corpus(count, base);
        ds.classes = 10;
        for (const auto& s : ds.strokes) {
            ds.tensors.push_back(rasterize(s, cfg.grid));
            ds.labels.push_back(s.label);
        }
    } else if (cfg.dataset_kind == "strokes") {
        const std::string& path = train ? cfg.train_path : cfg.test_path;
        check(!path.empty(), ErrorCode::ConfigError,
              std::string("dataset.") + (train ? "train" : "test") + " path not set");
        std::ifstream is(path);
        check(is.good(), ErrorCode::ParseError, "cannot open stroke file '" + path + "'");
        std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
        ds.strokes = parse_strokes(text);
        check(!ds.strokes.empty(), ErrorCode::EmptyInput, "stroke file '" + path + "' has no samples");
        int max_label = 0;
        for (const auto& s : ds.strokes) {
            ds.tensors.push_back(rasterize(s, cfg.grid));
            ds.labels.push_back(s.label);
            max_label = std::max(max_label, s.label);
        }
        ds.classes = max_label + 1;
    } else if (cfg.dataset_kind == "pointcloud") {
        const std::string& path = train ? cfg.train_path : cfg.test_path;
        check(!path.empty(), ErrorCode::ConfigError,
              std::string("dataset.") + (train ? "train" : "test") + " path not set");
        std::vector<std::string> files;
        if (fs::is_directory(path)) {
            for (const auto& e : fs::directory_iterator(path)) {
                if (e.path().extension() == ".pc") files.push_back(e.path().string());
            }
            std::sort(files.begin(), files.end());
        } else {
            files.push_back(path);
        }
        check(!files.empty(), ErrorCode::EmptyInput, "no .pc files under '" + path + "'");
        ds.segmentation = true;
        int max_label = 0;
        for (const auto& f : files) {
            std::ifstream is(f);
            check(is.good(), ErrorCode::ParseError, "cannot open '" + f + "'");
            std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
            PointCloudSample cloud = parse_pointcloud(text);
            VoxelizeResult vr = voxelize(cloud, 1.0, cloud.d);
            // networks need a fixed lattice: re-home on a grid^d box
            for (int i = 0; i < vr.tensor.d; ++i) {
                check(vr.tensor.size[i] <= cfg.grid, ErrorCode::BadGeometry,
                      "cloud '" + f + "' exceeds dataset.grid after voxelization");
                vr.tensor.size[i] = cfg.grid;
            }
            for (int& l : vr.site_labels) {
                if (l >= 0) max_label = std::max(max_label, l);
            }
            ds.tensors.push_back(std::move(vr.tensor));
            ds.site_labels.push_back(std::move(vr.site_labels));
        }
        ds.classes = std::max(cfg.classes, max_label + 1);
    } else {
        fail(ErrorCode::ConfigError, "unknown dataset kind '" + cfg.dataset_kind + "'");
    }
    check(!ds.tensors.empty(), ErrorCode::EmptyInput, "dataset is empty");
    return ds;
}

void check_geometry(const RunConfig& cfg, const Dataset& ds) {
    const SparseTensor& t = ds.tensors.front();
    check(t.d == cfg.net.d, ErrorCode::ConfigError,
          "net.d = " + std::to_string(cfg.net.d) + " but dataset is " + std::to_string(t.d) + "-d");
    for (int i = 0; i < t.d; ++i) {
        if (cfg.net.mode == LatentMode::ToPoint) {
            check(t.size[i] == cfg.net.min_input_size(), ErrorCode::ConfigError,
                  "to_point network needs input size " + std::to_string(cfg.net.min_input_size()) +
                      ", dataset has " + std::to_string(t.size[i]));
        } else {
            check(t.size[i] % cfg.net.downsample_factor() == 0, ErrorCode::ConfigError,
                  "dataset size not divisible by the downsample factor");
        }
    }
    check(t.channels == cfg.net.in_channels, ErrorCode::ConfigError,
          "net.in_channels does not match dataset feature width");
}

// ------------------------------------------------------------- model bundle

struct NamedParams {
    std::vector<std::pair<std::string, Param*>> params;
    std::vector<std::pair<std::string, BatchNormState*>> bns;

    ParamVisitor param_fn() {
        return [this](const std::string& name, Param& p) { params.emplace_back(name, &p); };
    }
    BnVisitor bn_fn() {
        return [this](const std::string& name, BatchNormState& b) { bns.emplace_back(name, &b); };
    }
    std::vector<Param*> ptrs() const {
        std::vector<Param*> out;
        out.reserve(params.size());
        for (const auto& [n, p] : params) out.push_back(p);
        return out;
    }
};

void fill_checkpoint(Checkpoint& ckpt, const NamedParams& np, bool with_optimizer) {
    for (const auto& [name, p] : np.params) {
        ckpt.tensors.push_back(to_record(name, p->dims, p->value));
        if (with_optimizer) {
            ckpt.tensors.push_back(to_record(name + ".adam.m", p->dims, p->m));
            ckpt.tensors.push_back(to_record(name + ".adam.v", p->dims, p->v));
        }
    }
    for (const auto& [name, b] : np.bns) {
        ckpt.tensors.push_back(to_record(name + ".running_mean", {b->channels()}, b->running_mean));
        ckpt.tensors.push_back(to_record(name + ".running_var", {b->channels()}, b->running_var));
    }
}

void load_into(const Checkpoint& ckpt, NamedParams& np) {
    for (auto& [name, p] : np.params) {
        const TensorRecord* rec = ckpt.find(name);
        check(rec != nullptr, ErrorCode::SpecMismatch, "checkpoint missing tensor '" + name + "'");
        from_record(*rec, p->dims, p->value);
        if (const TensorRecord* m = ckpt.find(name + ".adam.m")) from_record(*m, p->dims, p->m);
        if (const TensorRecord* v = ckpt.find(name + ".adam.v")) from_record(*v, p->dims, p->v);
    }
    for (auto& [name, b] : np.bns) {
        const TensorRecord* rm = ckpt.find(name + ".running_mean");
        const TensorRecord* rv = ckpt.find(name + ".running_var");
        check(rm && rv, ErrorCode::SpecMismatch, "checkpoint missing batch-norm state '" + name + "'");
        from_record(*rm, {b->channels()}, b->running_mean);
        from_record(*rv, {b->channels()}, b->running_var);
    }
}

struct SpecBlob {
    std::string kind; // autoencoder | classifier | segmenter
    NetworkSpec net;
    int grid = 32;
    int classes = 10;
    std::string head_kind = "linear";
    int head_hidden = 512;
    int shapectx_levels = 4;
};

std::string write_blob(const SpecBlob& b) {
    std::ostringstream os;
    os << "artifact = " << b.kind << "\n";
    os << "grid = " << b.grid << "\n";
    os << "classes = " << b.classes << "\n";
    os << "head.kind = " << b.head_kind << "\n";
    os << "head.hidden = " << b.head_hidden << "\n";
    os << "shapectx.levels = " << b.shapectx_levels << "\n";
    std::istringstream net(b.net.serialize());
    std::string line;
    while (std::getline(net, line)) os << "net." << line << "\n";
    return os.str();
}

SpecBlob parse_blob(const std::string& text) {
    SpecBlob b;
    std::string net_text;
    std::istringstream is(text);
    std::string line;
    auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        auto e = s.find_last_not_of(" \t\r");
        s.erase(e == std::string::npos ? 0 : e + 1);
        return s;
    };
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.rfind("net.", 0) == 0) {
            net_text += key.substr(4) + " = " + val + "\n";
        } else if (key == "artifact") b.kind = val;
        else if (key == "grid") b.grid = std::stoi(val);
        else if (key == "classes") b.classes = std::stoi(val);
        else if (key == "head.kind") b.head_kind = val;
        else if (key == "head.hidden") b.head_hidden = std::stoi(val);
        else if (key == "shapectx.levels") b.shapectx_levels = std::stoi(val);
    }
    check(!b.kind.empty(), ErrorCode::SpecMismatch, "checkpoint spec blob lacks an artifact kind");
    b.net = NetworkSpec::deserialize(net_text);
    return b;
}

OptimizerConfig make_opt(const RunConfig& cfg) {
    OptimizerConfig oc;
    if (cfg.opt_kind == "sgd") {
        oc.kind = OptimizerConfig::Kind::Sgd;
        oc.sgd.lr = static_cast<real>(cfg.lr);
        oc.sgd.momentum = static_cast<real>(cfg.momentum);
    } else {
        oc.kind = OptimizerConfig::Kind::Adam;
        oc.adam.lr = static_cast<real>(cfg.lr);
        oc.adam.beta1 = static_cast<real>(cfg.beta1);
        oc.adam.beta2 = static_cast<real>(cfg.beta2);
        oc.adam.eps = static_cast<real>(cfg.adam_eps);
    }
    return oc;
}

// training-time view of one sample, augmented when enabled
SparseTensor sample_tensor(const RunConfig& cfg, const Dataset& ds, size_t idx, bool augment,
                           uint64_t aug_seed) {
    if (augment && !ds.strokes.empty()) {
        StrokeSample s = random_affine(ds.strokes[idx], cfg.aug, aug_seed);
        return rasterize(s, cfg.grid);
    }
    return ds.tensors[idx];
}

std::vector<size_t> batch_indices(size_t n, size_t batch, size_t step_in_epoch,
                                  const std::vector<size_t>& order) {
    std::vector<size_t> out;
    const size_t start = step_in_epoch * batch;
    for (size_t i = start; i < std::min(start + batch, n); ++i) out.push_back(order[i]);
    return out;
}

struct ConfusionCounts {
    int64_t tp = 0, fp = 0, fn = 0;
    void add(const SparsifierRecord& rec) {
        for (int32_t r : rec.kept_rows) {
            (rec.f_value(r) > real(0) ? tp : fn)++;
        }
        for (int32_t r : rec.dropped_rows) {
            if (rec.f_value(r) > real(0)) fp++;
        }
    }
    double accuracy() const {
        const int64_t denom = tp + fp + fn;
        return denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
    }
};

} // namespace

SparseTensor make_batch(const std::vector<const SparseTensor*>& items) {
    check(!items.empty(), ErrorCode::EmptyInput, "empty batch");
    SparseTensor out;
    const SparseTensor& first = *items.front();
    out.d = first.d;
    out.size = first.size;
    out.channels = first.channels;
    out.batch_count = static_cast<int>(items.size());
    int64_t total = 0;
    for (const SparseTensor* t : items) {
        check(t->d == out.d && t->size == out.size && t->channels == out.channels,
              ErrorCode::ShapeMismatch, "batch items must share geometry");
        check(t->batch_count == 1, ErrorCode::ShapeMismatch, "batch items must be single samples");
        total += t->active();
    }
    out.coords.reserve(static_cast<size_t>(total));
    out.feats = Matrix(total, out.channels);
    out.index.reserve(static_cast<size_t>(total) * 2);
    int64_t row = 0;
    for (size_t b = 0; b < items.size(); ++b) {
        const SparseTensor& t = *items[b];
        for (int64_t r = 0; r < t.active(); ++r, ++row) {
            Coord c = t.coords[r];
            c.batch = static_cast<int32_t>(b);
            out.coords.push_back(c);
            out.index.emplace(c, static_cast<int32_t>(row));
            std::copy(t.feats.row(r), t.feats.row(r) + t.channels, out.feats.row(row));
        }
    }
    return out;
}

TrainAeResult cmd_train_autoencoder(const RunConfig& cfg) {
    cfg.validate();
    kern::set_threads(cfg.threads);
    Dataset train = load_dataset(cfg, true);
    check_geometry(cfg, train);

    Rng init_rng(mix_seed(cfg.seed, 0xA11CE));
    Encoder enc = build_encoder(cfg.net, init_rng);
    Decoder dec = build_decoder(cfg.net, init_rng);
    NamedParams np;
    enc.visit_params(np.param_fn());
    dec.visit_params(np.param_fn());
    enc.visit_bn(np.bn_fn());
    dec.visit_bn(np.bn_fn());
    auto params = np.ptrs();
    Optimizer opt(make_opt(cfg));

    const size_t n = train.size();
    const size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    const int64_t total_steps =
        cfg.steps > 0 ? cfg.steps : static_cast<int64_t>(cfg.epochs) * steps_per_epoch;

    const size_t n_sparsify = dec.stages.size();
    std::vector<real> weights(1 + n_sparsify, real(1));
    if (!cfg.loss_weights.empty()) {
        check(cfg.loss_weights.size() == weights.size(), ErrorCode::ConfigError,
              "loss.weights needs " + std::to_string(weights.size()) + " entries (MSE + levels)");
        for (size_t i = 0; i < weights.size(); ++i) weights[i] = static_cast<real>(cfg.loss_weights[i]);
    }

    const std::string log_path = cfg.out + ".log";
    std::ofstream log(log_path, std::ios::trunc);
    check(log.good(), ErrorCode::IoError, "cannot open log '" + log_path + "'");

    Rng shuffle_rng(mix_seed(cfg.seed, 0x5F0FFE));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    int64_t epoch = 0;
    real epoch_loss = 0, epoch_mse = 0;
    std::vector<real> epoch_sp(n_sparsify, 0);
    ConfusionCounts epoch_conf;
    int64_t epoch_steps = 0;

    for (int64_t step = 0; step < total_steps; ++step) {
        const size_t in_epoch = static_cast<size_t>(step) % steps_per_epoch;
        if (in_epoch == 0) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            ++epoch;
            epoch_loss = epoch_mse = 0;
            std::fill(epoch_sp.begin(), epoch_sp.end(), real(0));
            epoch_conf = {};
            epoch_steps = 0;
        }
        auto idxs = batch_indices(n, static_cast<size_t>(cfg.batch), in_epoch, order);
        std::vector<SparseTensor> batch_items;
        batch_items.reserve(idxs.size());
        for (size_t slot = 0; slot < idxs.size(); ++slot) {
            batch_items.push_back(sample_tensor(cfg, train, idxs[slot], cfg.augment,
                                                mix_seed(mix_seed(cfg.seed, 0xA06),
                                                         static_cast<uint64_t>(step) * 1024 + slot)));
        }
        std::vector<const SparseTensor*> ptrs;
        for (const auto& t : batch_items) ptrs.push_back(&t);
        SparseTensor batch = make_batch(ptrs);

        Tape tape;
        ExecContext ctx;
        ctx.training = true;
        ctx.tape = &tape;
        PatternStack ps;
        NodePtr input = make_node(batch);
        NodePtr latent = enc.forward(ctx, input, &ps);
        NodePtr out = dec.forward(ctx, latent, &ps, false);
        LossReport report =
            hierarchical_loss(batch, out, ctx.sparsifier_records, weights, cfg.monochrome, &tape);

        opt.zero_grad(params);
        tape.backward();
        opt.step(params);

        log << "step=" << (step + 1) << " loss=" << fmt(report.total) << " mse=" << fmt(report.mse);
        for (size_t i = 0; i < report.sparsifier_losses.size(); ++i) {
            log << " sp" << i << "=" << fmt(report.sparsifier_losses[i].second);
        }
        log << "\n";

        epoch_loss += report.total;
        epoch_mse += report.mse;
        for (size_t i = 0; i < report.sparsifier_losses.size(); ++i) {
            epoch_sp[i] += report.sparsifier_losses[i].second;
        }
        for (const auto& rec : ctx.sparsifier_records) epoch_conf.add(rec);
        ++epoch_steps;

        if (in_epoch + 1 == steps_per_epoch || step + 1 == total_steps) {
            log << "epoch=" << epoch << " loss=" << fmt(epoch_loss / epoch_steps)
                << " mse=" << fmt(epoch_mse / epoch_steps);
            for (size_t i = 0; i < epoch_sp.size(); ++i) {
                log << " sp" << i << "=" << fmt(epoch_sp[i] / epoch_steps);
            }
            log << " sp_acc=" << fmt(epoch_conf.accuracy()) << "\n";
        }
    }

    // final pass over the (unaugmented) training set with frozen statistics
    real sq_sum = 0;
    int64_t site_sum = 0;
    ConfusionCounts final_conf;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch)) {
        std::vector<const SparseTensor*> ptrs;
        for (size_t i = start; i < std::min(start + cfg.batch, n); ++i) ptrs.push_back(&train.tensors[i]);
        SparseTensor batch = make_batch(ptrs);
        ExecContext ctx;
        ctx.training = false;
        PatternStack ps;
        NodePtr latent = enc.forward(ctx, make_node(batch), &ps);
        NodePtr out = dec.forward(ctx, latent, &ps, false);
        sq_sum += mse_loss(batch, out->st) * static_cast<real>(batch.active());
        site_sum += batch.active();
        for (const auto& rec : ctx.sparsifier_records) final_conf.add(rec);
    }

    TrainAeResult result;
    result.final_mse = static_cast<double>(sq_sum / static_cast<real>(site_sum));
    result.sparsifier_accuracy = final_conf.accuracy();
    result.log_path = log_path;
    result.checkpoint_path = cfg.out + ".ckpt";
    log << "final mse=" << fmt(result.final_mse) << " sp_acc=" << fmt(result.sparsifier_accuracy)
        << "\n";

    Checkpoint ckpt;
    SpecBlob blob;
    blob.kind = "autoencoder";
    blob.net = cfg.net;
    blob.grid = cfg.grid;
    ckpt.spec_blob = write_blob(blob);
    ckpt.seed = cfg.seed;
    ckpt.step = static_cast<uint64_t>(total_steps);
    fill_checkpoint(ckpt, np, cfg.save_optimizer);
    save_checkpoint(ckpt, result.checkpoint_path);
    return result;
}

namespace {

// assembles the per-batch logits and target labels for each head kind
struct HeadRun {
    RunConfig cfg;
    SpecBlob blob;
    Encoder* enc = nullptr;
    ClassifierHead* cls = nullptr;
    NonConvNet* ncn = nullptr;
    UNet* unet = nullptr;
    bool frozen = true;

    // returns logits node; labels written to `targets`
    NodePtr forward(ExecContext& ctx, const SparseTensor& batch,
                    const std::vector<size_t>& idxs, const Dataset& ds,
                    std::vector<int>& targets) {
        targets.clear();
        if (unet) {
            for (size_t i : idxs) {
                for (int l : ds.site_labels[i]) targets.push_back(l < 0 ? 0 : l);
            }
            return unet->forward(ctx, make_node(batch));
        }
        if (blob.head_kind == "shapectx") {
            for (size_t i : idxs) {
                for (int l : ds.site_labels[i]) targets.push_back(l < 0 ? 0 : l);
            }
            SparseTensor feats = shape_context(batch, blob.shapectx_levels);
            return cls->forward(ctx, make_node(std::move(feats)));
        }
        PatternStack ps;
        NodePtr latent;
        if (frozen) {
            ExecContext enc_ctx; // eval, no tape: encoder untouched by training
            latent = enc->forward(enc_ctx, make_node(batch), &ps);
        } else {
            latent = enc->forward(ctx, make_node(batch), &ps);
        }
        if (ncn) {
            for (size_t i : idxs) {
                for (int l : ds.site_labels[i]) targets.push_back(l < 0 ? 0 : l);
            }
            return ncn->forward(ctx, latent, ps);
        }
        check(latent->st.active() == static_cast<int64_t>(idxs.size()), ErrorCode::ShapeMismatch,
              "every sample must produce exactly one latent row");
        for (size_t i : idxs) targets.push_back(ds.labels[i]);
        return cls->forward(ctx, latent);
    }
};

} // namespace

TrainHeadResult cmd_train_head(const RunConfig& cfg, const std::string& encoder_ckpt_path) {
    cfg.validate();
    kern::set_threads(cfg.threads);
    Dataset train = load_dataset(cfg, true);

    const bool classification = cfg.head_kind == "linear" || cfg.head_kind == "mlp";
    check(classification ? !train.labels.empty() : !train.site_labels.empty(),
          ErrorCode::ConfigError,
          classification ? "head kind needs per-sample labels (digits/strokes dataset)"
                         : "head kind needs per-site labels (synth/pointcloud dataset)");

    SpecBlob blob;
    blob.kind = classification ? "classifier" : "segmenter";
    blob.grid = cfg.grid;
    blob.classes = train.classes;
    blob.head_kind = cfg.head_kind;
    blob.head_hidden = cfg.head_hidden;
    blob.shapectx_levels = cfg.shapectx_levels;
    if (!encoder_ckpt_path.empty()) {
        Checkpoint enc_ckpt = load_checkpoint(encoder_ckpt_path);
        SpecBlob enc_blob = parse_blob(enc_ckpt.spec_blob);
        check(enc_blob.kind == "autoencoder", ErrorCode::SpecMismatch,
              "train-head expects an autoencoder checkpoint");
        blob.net = enc_blob.net;
    } else {
        blob.net = cfg.net;
    }
    RunConfig eff = cfg;
    eff.net = blob.net;
    check_geometry(eff, train);

    Rng init_rng(mix_seed(cfg.seed, 0xB0B));
    Encoder enc = build_encoder(blob.net, init_rng);
    ClassifierHead cls;
    NonConvNet ncn;
    UNet unet;
    const bool use_unet = cfg.head_kind == "unet";
    const bool use_ncn = cfg.head_kind == "nonconvnet";
    const bool use_shapectx = cfg.head_kind == "shapectx";

    NamedParams trainable;
    NamedParams all; // everything persisted in the checkpoint
    if (use_unet) {
        unet = build_unet(blob.net, train.classes, init_rng);
        unet.visit_params(trainable.param_fn());
        unet.visit_params(all.param_fn());
        unet.visit_bn(all.bn_fn());
    } else {
        if (!encoder_ckpt_path.empty()) {
            NamedParams enc_np;
            enc.visit_params(enc_np.param_fn());
            enc.visit_bn(enc_np.bn_fn());
            Checkpoint enc_ckpt = load_checkpoint(encoder_ckpt_path);
            load_into(enc_ckpt, enc_np);
        }
        if (use_shapectx) {
            int g = 1;
            for (int i = 0; i < blob.net.d; ++i) g *= 3;
            cls = build_classifier_head(HeadKind::Mlp, g * blob.net.in_channels * cfg.shapectx_levels,
                                        train.classes, init_rng, cfg.head_hidden);
            cls.visit_params(trainable.param_fn());
            cls.visit_params(all.param_fn());
        } else if (use_ncn) {
            ncn = build_nonconvnet(blob.net, train.classes, init_rng);
            ncn.visit_params(trainable.param_fn());
            ncn.visit_params(all.param_fn());
            ncn.visit_bn(all.bn_fn());
        } else {
            cls = build_classifier_head(cfg.head_kind == "mlp" ? HeadKind::Mlp : HeadKind::Linear,
                                        blob.net.latent_channels(), train.classes, init_rng,
                                        cfg.head_hidden);
            cls.visit_params(trainable.param_fn());
            cls.visit_params(all.param_fn());
        }
        if (!use_shapectx) {
            if (!cfg.head_frozen) {
                enc.visit_params(trainable.param_fn());
            } else if (encoder_ckpt_path.empty()) {
                // untrained baseline: burn in the batch-norm population
                // statistics with forward passes, no parameter updates
                std::vector<SparseTensor> batches;
                const size_t n = train.size();
                for (size_t start = 0; start < n && batches.size() < 100;
                     start += static_cast<size_t>(cfg.batch)) {
                    std::vector<const SparseTensor*> ptrs;
                    for (size_t i = start; i < std::min(start + cfg.batch, n); ++i) {
                        ptrs.push_back(&train.tensors[i]);
                    }
                    batches.push_back(make_batch(ptrs));
                }
                burn_in_batchnorm(enc, batches, 100);
            }
            enc.visit_params(all.param_fn());
            enc.visit_bn(all.bn_fn());
        }
    }

    HeadRun run;
    run.cfg = cfg;
    run.blob = blob;
    run.enc = &enc;
    run.cls = (use_shapectx || (!use_unet && !use_ncn)) ? &cls : nullptr;
    run.ncn = use_ncn ? &ncn : nullptr;
    run.unet = use_unet ? &unet : nullptr;
    run.frozen = cfg.head_frozen && !use_unet && !use_shapectx;

    auto params = trainable.ptrs();
    Optimizer opt(make_opt(cfg));

    const std::string log_path = cfg.out + ".log";
    std::ofstream log(log_path, std::ios::trunc);
    check(log.good(), ErrorCode::IoError, "cannot open log '" + log_path + "'");

    int64_t head_params = 0, encoder_params = 0, trainable_count = 0;
    for (const auto& [name, p] : all.params) {
        (name.rfind("enc.", 0) == 0 ? encoder_params : head_params) += p->size();
    }
    for (const auto& [name, p] : trainable.params) trainable_count += p->size();
    log << "head_params=" << head_params << " encoder_params=" << encoder_params
        << " trainable=" << trainable_count << "\n";

    const size_t n = train.size();
    const size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
    Rng shuffle_rng(mix_seed(cfg.seed, 0xCAFE));
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;

    int64_t step = 0;
    for (int ep = 0; ep < cfg.head_epochs; ++ep) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        real ep_loss = 0;
        int64_t ep_hits = 0, ep_total = 0;
        for (size_t s = 0; s < steps_per_epoch; ++s, ++step) {
            auto idxs = batch_indices(n, static_cast<size_t>(cfg.batch), s, order);
            std::vector<SparseTensor> items;
            for (size_t slot = 0; slot < idxs.size(); ++slot) {
                items.push_back(sample_tensor(cfg, train, idxs[slot], cfg.augment,
                                              mix_seed(mix_seed(cfg.seed, 0xF00D),
                                                       static_cast<uint64_t>(step) * 1024 + slot)));
            }
            std::vector<const SparseTensor*> ptrs;
            for (const auto& t : items) ptrs.push_back(&t);
            SparseTensor batch = make_batch(ptrs);

            Tape tape;
            ExecContext ctx;
            ctx.training = true;
            ctx.tape = &tape;
            std::vector<int> targets;
            NodePtr logits = run.forward(ctx, batch, idxs, train, targets);
            const real loss = softmax_cross_entropy(logits, targets, &tape);
            opt.zero_grad(params);
            tape.backward();
            opt.step(params);

            for (int64_t r = 0; r < logits->st.feats.rows; ++r) {
                const real* row = logits->st.feats.row(r);
                int best = 0;
                for (int c = 1; c < train.classes; ++c) {
                    if (row[c] > row[best]) best = c;
                }
                ep_hits += best == targets[static_cast<size_t>(r)];
                ++ep_total;
            }
            ep_loss += loss;
            log << "step=" << step + 1 << " loss=" << fmt(loss) << "\n";
        }
        log << "epoch=" << ep + 1 << " loss=" << fmt(ep_loss / steps_per_epoch)
            << " train_err=" << fmt(100.0 * (1.0 - static_cast<double>(ep_hits) / ep_total)) << "\n";
    }

    // final training error without augmentation
    int64_t hits = 0, total = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch)) {
        std::vector<size_t> idxs;
        std::vector<const SparseTensor*> ptrs;
        for (size_t i = start; i < std::min(start + cfg.batch, n); ++i) {
            idxs.push_back(i);
            ptrs.push_back(&train.tensors[i]);
        }
        SparseTensor batch = make_batch(ptrs);
        ExecContext ctx;
        std::vector<int> targets;
        NodePtr logits = run.forward(ctx, batch, idxs, train, targets);
        for (int64_t r = 0; r < logits->st.feats.rows; ++r) {
            const real* row = logits->st.feats.row(r);
            int best = 0;
            for (int c = 1; c < train.classes; ++c) {
                if (row[c] > row[best]) best = c;
            }
            hits += best == targets[static_cast<size_t>(r)];
            ++total;
        }
    }

    TrainHeadResult result;
    result.final_train_error = 100.0 * (1.0 - static_cast<double>(hits) / total);
    result.log_path = log_path;
    result.checkpoint_path = cfg.out + ".ckpt";
    log << "final train_err=" << fmt(result.final_train_error) << "\n";

    Checkpoint ckpt;
    ckpt.spec_blob = write_blob(blob);
    ckpt.seed = cfg.seed;
    ckpt.step = static_cast<uint64_t>(step);
    fill_checkpoint(ckpt, all, cfg.save_optimizer);
    save_checkpoint(ckpt, result.checkpoint_path);
    return result;
}

EvalResult cmd_eval(const RunConfig& cfg, const std::string& ckpt_path) {
    cfg.validate();
    kern::set_threads(cfg.threads);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    SpecBlob blob = parse_blob(ckpt.spec_blob);

    RunConfig eff = cfg;
    eff.net = blob.net;
    Dataset test = load_dataset(eff, false);
    check_geometry(eff, test);

    EvalResult result;
    result.kind = blob.kind;
    result.samples = static_cast<int64_t>(test.size());
    double occ_sum = 0;
    for (const auto& t : test.tensors) occ_sum += occupancy(t);
    result.mean_occupancy = occ_sum / static_cast<double>(test.size());

    Rng init_rng(mix_seed(1, 1)); // overwritten by the checkpoint load

    if (blob.kind == "autoencoder") {
        Encoder enc = build_encoder(blob.net, init_rng);
        Decoder dec = build_decoder(blob.net, init_rng);
        NamedParams np;
        enc.visit_params(np.param_fn());
        dec.visit_params(np.param_fn());
        enc.visit_bn(np.bn_fn());
        dec.visit_bn(np.bn_fn());
        load_into(ckpt, np);

        real sq_sum = 0;
        int64_t site_sum = 0;
        for (const auto& t : test.tensors) {
            ExecContext ctx;
            PatternStack ps;
            NodePtr latent = enc.forward(ctx, make_node(t), &ps);
            NodePtr recon = dec.forward(ctx, latent, &ps, false);
            sq_sum += mse_loss(t, recon->st) * static_cast<real>(t.active());
            site_sum += t.active();

            ExecContext ctx2;
            PatternStack ps2;
            NodePtr latent2 = enc.forward(ctx2, make_node(t), &ps2);
            NodePtr thresholded = dec.forward(ctx2, latent2, nullptr, true);
            PatternConfusion pc = pattern_confusion(thresholded->st.coords, t.coords);
            result.confusion += pc;
        }
        result.mse = static_cast<double>(sq_sum / static_cast<real>(site_sum));
    } else {
        const bool classification = blob.kind == "classifier";
        Encoder enc = build_encoder(blob.net, init_rng);
        ClassifierHead cls;
        NonConvNet ncn;
        UNet unet;
        NamedParams np;
        const bool use_unet = blob.head_kind == "unet";
        const bool use_ncn = blob.head_kind == "nonconvnet";
        const bool use_shapectx = blob.head_kind == "shapectx";
        if (use_unet) {
            unet = build_unet(blob.net, blob.classes, init_rng);
            unet.visit_params(np.param_fn());
            unet.visit_bn(np.bn_fn());
        } else if (use_ncn) {
            ncn = build_nonconvnet(blob.net, blob.classes, init_rng);
            ncn.visit_params(np.param_fn());
            ncn.visit_bn(np.bn_fn());
            enc.visit_params(np.param_fn());
            enc.visit_bn(np.bn_fn());
        } else if (use_shapectx) {
            int g = 1;
            for (int i = 0; i < blob.net.d; ++i) g *= 3;
            cls = build_classifier_head(HeadKind::Mlp,
                                        g * blob.net.in_channels * blob.shapectx_levels,
                                        blob.classes, init_rng, blob.head_hidden);
            cls.visit_params(np.param_fn());
        } else {
            cls = build_classifier_head(blob.head_kind == "mlp" ? HeadKind::Mlp : HeadKind::Linear,
                                        blob.net.latent_channels(), blob.classes, init_rng,
                                        blob.head_hidden);
            cls.visit_params(np.param_fn());
            enc.visit_params(np.param_fn());
            enc.visit_bn(np.bn_fn());
        }
        load_into(ckpt, np);

        HeadRun run;
        run.cfg = eff;
        run.blob = blob;
        run.enc = &enc;
        run.cls = (use_shapectx || (!use_unet && !use_ncn)) ? &cls : nullptr;
        run.ncn = use_ncn ? &ncn : nullptr;
        run.unet = use_unet ? &unet : nullptr;
        run.frozen = true;

        std::vector<int> preds, labels;
        const size_t n = test.size();
        for (size_t start = 0; start < n; start += static_cast<size_t>(eff.batch)) {
            std::vector<size_t> idxs;
            std::vector<const SparseTensor*> ptrs;
            for (size_t i = start; i < std::min(start + eff.batch, n); ++i) {
                idxs.push_back(i);
                ptrs.push_back(&test.tensors[i]);
            }
            SparseTensor batch = make_batch(ptrs);
            ExecContext ctx;
            std::vector<int> targets;
            NodePtr logits = run.forward(ctx, batch, idxs, test, targets);
            for (int64_t r = 0; r < logits->st.feats.rows; ++r) {
                const real* row = logits->st.feats.row(r);
                int best = 0;
                for (int c = 1; c < test.classes; ++c) {
                    if (row[c] > row[best]) best = c;
                }
                preds.push_back(best);
                labels.push_back(targets[static_cast<size_t>(r)]);
            }
        }
        if (classification) {
            result.classification_error = classification_error(preds, labels);
        } else {
            result.mean_iou = mean_iou(preds, labels, test.classes);
            int64_t hits = 0;
            for (size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
            result.site_accuracy = static_cast<double>(hits) / static_cast<double>(preds.size());
        }
    }

    result.report_txt_path = cfg.out + ".report.txt";
    result.report_json_path = cfg.out + ".report.json";
    {
        std::ofstream txt(result.report_txt_path, std::ios::trunc);
        check(txt.good(), ErrorCode::IoError, "cannot write report");
        txt << "kind=" << result.kind << "\n";
        txt << "samples=" << result.samples << "\n";
        txt << "mean_occupancy=" << fmt(result.mean_occupancy) << "\n";
        if (result.classification_error >= 0) {
            txt << "classification_error=" << fmt(result.classification_error) << "\n";
        }
        if (result.mean_iou >= 0) {
            txt << "mean_iou=" << fmt(result.mean_iou) << "\n";
            txt << "site_accuracy=" << fmt(result.site_accuracy) << "\n";
        }
        if (result.kind == "autoencoder") {
            txt << "mse=" << fmt(result.mse) << "\n";
            txt << "pattern_tp=" << result.confusion.tp << "\n";
            txt << "pattern_fp=" << result.confusion.fp << "\n";
            txt << "pattern_fn=" << result.confusion.fn << "\n";
            txt << "pattern_iou=" << fmt(result.confusion.iou()) << "\n";
        }
    }
    {
        nlohmann::json j;
        j["kind"] = result.kind;
        j["samples"] = result.samples;
        j["mean_occupancy"] = result.mean_occupancy;
        if (result.classification_error >= 0) j["classification_error"] = result.classification_error;
        if (result.mean_iou >= 0) {
            j["mean_iou"] = result.mean_iou;
            j["site_accuracy"] = result.site_accuracy;
        }
        if (result.kind == "autoencoder") {
            j["mse"] = result.mse;
            j["pattern"] = {{"tp", result.confusion.tp},
                            {"fp", result.confusion.fp},
                            {"fn", result.confusion.fn},
                            {"iou", result.confusion.iou()}};
        }
        std::ofstream js(result.report_json_path, std::ios::trunc);
        check(js.good(), ErrorCode::IoError, "cannot write JSON report");
        js << j.dump(2) << "\n";
    }
    return result;
}

ReconstructResult cmd_reconstruct(const RunConfig& cfg, const std::string& ckpt_path) {
    cfg.validate();
    kern::set_threads(cfg.threads);
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    SpecBlob blob = parse_blob(ckpt.spec_blob);
    check(blob.kind == "autoencoder", ErrorCode::SpecMismatch,
          "reconstruct expects an autoencoder checkpoint");

    RunConfig eff = cfg;
    eff.net = blob.net;
    Dataset data = load_dataset(eff, cfg.recon_split == "train");
    check_geometry(eff, data);

    Rng init_rng(mix_seed(1, 1));
    Encoder enc = build_encoder(blob.net, init_rng);
    Decoder dec = build_decoder(blob.net, init_rng);
    NamedParams np;
    enc.visit_params(np.param_fn());
    dec.visit_params(np.param_fn());
    enc.visit_bn(np.bn_fn());
    dec.visit_bn(np.bn_fn());
    load_into(ckpt, np);

    ReconstructResult result;
    result.out_dir = cfg.out;
    fs::create_directories(result.out_dir);

    const size_t count = std::min<size_t>(static_cast<size_t>(cfg.recon_count), data.size());
    for (size_t s = 0; s < count; ++s) {
        const SparseTensor& input = data.tensors[s];
        ExecContext ctx;
        PatternStack ps;
        NodePtr latent = enc.forward(ctx, make_node(input), &ps);
        DecodeTrace trace;
        NodePtr recon = dec.forward(ctx, latent, nullptr, true, &trace);

        std::vector<int64_t> enc_counts, dec_counts;
        // encoder patterns matching decoder stages, coarse to fine, skipping
        // the latent level itself
        const int L = ps.levels();
        for (size_t i = 0; i < trace.patterns.size(); ++i) {
            const int level = L - 2 - static_cast<int>(i);
            enc_counts.push_back(static_cast<int64_t>(ps.patterns[level].size()));
            dec_counts.push_back(static_cast<int64_t>(trace.patterns[i].size()));

            // confusion-labelled pattern dump for this scale
            PointCloudSample dump;
            dump.d = input.d;
            auto add = [&](const Coord& c, int label) {
                std::vector<double> pt(input.d);
                for (int k = 0; k < input.d; ++k) pt[k] = c.pos[k];
                dump.points.push_back(std::move(pt));
                dump.labels.push_back(label);
            };
            std::vector<Coord> truth = ps.patterns[level];
            std::vector<Coord> pred = trace.patterns[i];
            std::sort(truth.begin(), truth.end());
            std::sort(pred.begin(), pred.end());
            size_t a = 0, b = 0;
            while (a < pred.size() || b < truth.size()) {
                if (a < pred.size() && b < truth.size() && pred[a] == truth[b]) {
                    add(pred[a], 0); // true positive
                    ++a;
                    ++b;
                } else if (b >= truth.size() || (a < pred.size() && pred[a] < truth[b])) {
                    add(pred[a], 1); // false positive
                    ++a;
                } else {
                    add(truth[b], 2); // false negative
                    ++b;
                }
            }
            const std::string path = result.out_dir + "/sample" + std::to_string(s) + "_scale" +
                                     std::to_string(i) + ".pc";
            std::ofstream os(path, std::ios::trunc);
            check(os.good(), ErrorCode::IoError, "cannot write '" + path + "'");
            os << format_pointcloud(dump);
            result.files.push_back(path);
        }
        result.encoder_counts.push_back(std::move(enc_counts));
        result.decoded_counts.push_back(std::move(dec_counts));

        // input and final reconstruction feature clouds
        auto tensor_cloud = [&](const SparseTensor& t) {
            PointCloudSample cloud;
            cloud.d = t.d;
            for (int64_t r = 0; r < t.active(); ++r) {
                std::vector<double> pt(t.d);
                for (int k = 0; k < t.d; ++k) pt[k] = t.coords[r].pos[k];
                cloud.points.push_back(std::move(pt));
                std::vector<double> feat(t.channels);
                for (int c = 0; c < t.channels; ++c) feat[c] = static_cast<double>(t.feats.at(r, c));
                cloud.features.push_back(std::move(feat));
                cloud.labels.push_back(-1);
            }
            return cloud;
        };
        for (const auto& [suffix, tensor] :
             {std::pair<const char*, const SparseTensor*>{"input", &input},
              std::pair<const char*, const SparseTensor*>{"recon", &recon->st}}) {
            const std::string path =
                result.out_dir + "/sample" + std::to_string(s) + "_" + suffix + ".pc";
            std::ofstream os(path, std::ios::trunc);
            check(os.good(), ErrorCode::IoError, "cannot write '" + path + "'");
            if (tensor->active() > 0) {
                os << format_pointcloud(tensor_cloud(*tensor));
            } else {
                os << tensor->d << " 0 0\n";
            }
            result.files.push_back(path);
        }
    }
    return result;
}

void cmd_gen_synth(const RunConfig& cfg) {
    cfg.validate();
    if (cfg.synth_style == "digits") {
        auto train = synth_digit_corpus(cfg.digits_train, cfg.data_seed);
        auto test = synth_digit_corpus(cfg.digits_test, cfg.data_seed ^ 0xd161757e57ull);
        for (const auto& [suffix, corpus] :
             {std::pair<const char*, const std::vector<StrokeSample>*>{"_train.strokes", &train},
              std::pair<const char*, const std::vector<StrokeSample>*>{"_test.strokes", &test}}) {
            const std::string path = cfg.out + suffix;
            std::ofstream os(path, std::ios::trunc);
            check(os.good(), ErrorCode::IoError, "cannot write '" + path + "'");
            os << format_strokes(*corpus);
        }
        return;
    }
    SynthStyle style = cfg.synth_style == "shell"    ? SynthStyle::Shell
                       : cfg.synth_style == "random" ? SynthStyle::Random
                                                     : SynthStyle::Polyline;
    fs::create_directories(cfg.out);
    for (int i = 0; i < cfg.synth_count; ++i) {
        SynthSample s = synth_sparse(cfg.synth_d, cfg.synth_size, style,
                                     mix_seed(cfg.data_seed, static_cast<uint64_t>(i)),
                                     cfg.synth_occupancy);
        PointCloudSample cloud;
        cloud.d = s.tensor.d;
        for (int64_t r = 0; r < s.tensor.active(); ++r) {
            std::vector<double> pt(s.tensor.d);
            for (int k = 0; k < s.tensor.d; ++k) pt[k] = s.tensor.coords[r].pos[k];
            cloud.points.push_back(std::move(pt));
            cloud.features.push_back({1.0});
            cloud.labels.push_back(s.site_labels[r]);
        }
        char name[32];
        std::snprintf(name, sizeof(name), "/sample%05d.pc", i);
        std::ofstream os(cfg.out + name, std::ios::trunc);
        check(os.good(), ErrorCode::IoError, "cannot write sample file");
        os << format_pointcloud(cloud);
    }
}

void cmd_convert_strokes(const std::string& input_path, const std::string& out_path,
                         const std::string& format) {
    std::ifstream is(input_path);
    check(is.good(), ErrorCode::ParseError, "cannot open '" + input_path + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    std::vector<StrokeSample> samples;
    if (format == "pendigits") {
        samples = convert_pendigits(text);
    } else if (format == "canonical") {
        samples = parse_strokes(text);
    } else {
        fail(ErrorCode::ConfigError, "convert-strokes format must be pendigits|canonical");
    }
    std::ofstream os(out_path, std::ios::trunc);
    check(os.good(), ErrorCode::IoError, "cannot write '" + out_path + "'");
    os << format_strokes(samples);
}

int exit_code_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::ConfigError:
        case ErrorCode::SpecInvalid:
            return 2;
        case ErrorCode::ParseError:
        case ErrorCode::DataError:
        case ErrorCode::EmptyCloud:
        case ErrorCode::DegenerateSample:
        case ErrorCode::EmptyInput:
        case ErrorCode::OutOfRange:
        case ErrorCode::DuplicateSite:
        case ErrorCode::DimensionMismatch:
        case ErrorCode::TooLarge:
        case ErrorCode::BadGeometry:
        case ErrorCode::IoError:
            return 3;
        case ErrorCode::BadMagic:
        case ErrorCode::VersionUnsupported:
        case ErrorCode::Truncated:
        case ErrorCode::SpecMismatch:
            return 4;
        default:
            return 1;
    }
}

} // namespace spae
