#include "spae/config.hpp"

#include <fstream>
#include <sstream>

namespace spae {

namespace {

std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r\n"));
    auto e = s.find_last_not_of(" \t\r\n");
    s.erase(e == std::string::npos ? 0 : e + 1);
    return s;
}

[[noreturn]] void bad(const std::string& what) { fail(ErrorCode::ConfigError, what); }

int64_t to_int(const std::string& key, const std::string& val) {
    try {
        size_t used = 0;
        int64_t v = std::stoll(val, &used);
        if (used != val.size()) throw std::runtime_error("trail");
        return v;
    } catch (...) {
        bad("config key '" + key + "': expected integer, got '" + val + "'");
    }
}

double to_real(const std::string& key, const std::string& val) {
    try {
        size_t used = 0;
        double v = std::stod(val, &used);
        if (used != val.size()) throw std::runtime_error("trail");
        return v;
    } catch (...) {
        bad("config key '" + key + "': expected number, got '" + val + "'");
    }
}

bool to_bool(const std::string& key, const std::string& val) {
    if (val == "true" || val == "1" || val == "yes") return true;
    if (val == "false" || val == "0" || val == "no") return false;
    bad("config key '" + key + "': expected boolean, got '" + val + "'");
}

} // namespace

void RunConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) bad(what);
    };
    require(dataset_kind == "synth" || dataset_kind == "digits" || dataset_kind == "strokes" ||
                dataset_kind == "pointcloud",
            "dataset.kind must be synth|digits|strokes|pointcloud");
    require(grid >= 8, "dataset.grid must be >= 8");
    require(synth_style == "polyline" || synth_style == "shell" || synth_style == "random" ||
                synth_style == "digits",
            "synth.style must be polyline|shell|random|digits");
    require(synth_count >= 1, "synth.count must be >= 1");
    require(synth_test_count >= 0, "synth.test_count must be >= 0");
    require(synth_size >= 4, "synth.size must be >= 4");
    require(synth_d >= 2 && synth_d <= 4, "synth.d must be in [2,4]");
    require(synth_occupancy > 0.0 && synth_occupancy <= 1.0, "synth.occupancy must be in (0,1]");
    require(digits_train >= 1 && digits_test >= 1, "digit corpus sizes must be positive");
    require(epochs >= 1, "train.epochs must be >= 1");
    require(steps >= 0, "train.steps must be >= 0");
    require(batch >= 1, "train.batch must be >= 1");
    require(opt_kind == "adam" || opt_kind == "sgd", "opt.kind must be adam|sgd");
    require(lr > 0, "opt.lr must be positive");
    require(momentum >= 0 && momentum < 1, "opt.momentum must be in [0,1)");
    require(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1, "adam betas must be in (0,1)");
    require(adam_eps > 0, "opt.eps must be positive");
    for (double w : loss_weights) require(w >= 0, "loss.weights must be non-negative");
    require(aug.scale_min > 0 && aug.scale_max >= aug.scale_min, "bad augmentation scale range");
    require(aug.rotate_deg >= 0 && aug.shear >= 0 && aug.translate_frac >= 0,
            "augmentation bounds must be non-negative");
    require(head_kind == "linear" || head_kind == "mlp" || head_kind == "nonconvnet" ||
                head_kind == "unet" || head_kind == "shapectx",
            "head.kind must be linear|mlp|nonconvnet|unet|shapectx");
    require(head_hidden >= 1, "head.hidden must be >= 1");
    require(head_epochs >= 1, "head.epochs must be >= 1");
    require(classes >= 2, "head.classes must be >= 2");
    require(shapectx_levels >= 1, "shapectx.levels must be >= 1");
    require(recon_count >= 1, "recon.count must be >= 1");
    require(recon_split == "test" || recon_split == "train", "recon.split must be test|train");
    require(threads >= 1, "threads must be >= 1");
    require(!out.empty(), "out path must not be empty");
    try {
        net.validate();
    } catch (const Error& e) {
        bad(std::string("network spec: ") + e.what());
    }
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            bad("config line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));

        if (key == "dataset.kind") cfg.dataset_kind = val;
        else if (key == "dataset.train") cfg.train_path = val;
        else if (key == "dataset.test") cfg.test_path = val;
        else if (key == "dataset.grid") cfg.grid = static_cast<int>(to_int(key, val));
        else if (key == "synth.style") cfg.synth_style = val;
        else if (key == "synth.count") cfg.synth_count = static_cast<int>(to_int(key, val));
        else if (key == "synth.test_count") cfg.synth_test_count = static_cast<int>(to_int(key, val));
        else if (key == "synth.size") cfg.synth_size = static_cast<int>(to_int(key, val));
        else if (key == "synth.d") cfg.synth_d = static_cast<int>(to_int(key, val));
        else if (key == "synth.occupancy") cfg.synth_occupancy = to_real(key, val);
        else if (key == "data.seed") cfg.data_seed = static_cast<uint64_t>(to_int(key, val));
        else if (key == "digits.train_count") cfg.digits_train = static_cast<int>(to_int(key, val));
        else if (key == "digits.test_count") cfg.digits_test = static_cast<int>(to_int(key, val));
        else if (key == "net.d") cfg.net.d = static_cast<int>(to_int(key, val));
        else if (key == "net.k") cfg.net.k = static_cast<int>(to_int(key, val));
        else if (key == "net.growth") {
            if (val == "doubling") cfg.net.growth = Growth::Doubling;
            else if (val == "linear") cfg.net.growth = Growth::Linear;
            else bad("net.growth must be doubling|linear");
        } else if (key == "net.block") {
            if (val == "single") cfg.net.block = BlockStyle::SingleSSC;
            else if (val == "residual2") cfg.net.block = BlockStyle::Residual2;
            else bad("net.block must be single|residual2");
        } else if (key == "net.scales") cfg.net.scales = static_cast<int>(to_int(key, val));
        else if (key == "net.mode") {
            if (val == "to_point") cfg.net.mode = LatentMode::ToPoint;
            else if (val == "fixed_factor") cfg.net.mode = LatentMode::FixedFactor;
            else bad("net.mode must be to_point|fixed_factor");
        } else if (key == "net.factor") {
            const int64_t f = to_int(key, val);
            if (f < 2 || (f & (f - 1)) != 0) bad("net.factor must be a power of two >= 2");
            int scales = 1;
            for (int64_t v = f; v > 1; v >>= 1) ++scales;
            cfg.net.scales = scales;
            cfg.net.mode = LatentMode::FixedFactor;
        } else if (key == "net.in_channels") cfg.net.in_channels = static_cast<int>(to_int(key, val));
        else if (key == "net.latent_blocks") cfg.net.latent_ssc_blocks = static_cast<int>(to_int(key, val));
        else if (key == "train.epochs") cfg.epochs = static_cast<int>(to_int(key, val));
        else if (key == "train.steps") cfg.steps = to_int(key, val);
        else if (key == "train.batch") cfg.batch = static_cast<int>(to_int(key, val));
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(to_int(key, val));
        else if (key == "opt.kind") cfg.opt_kind = val;
        else if (key == "opt.lr") cfg.lr = to_real(key, val);
        else if (key == "opt.momentum") cfg.momentum = to_real(key, val);
        else if (key == "opt.beta1") cfg.beta1 = to_real(key, val);
        else if (key == "opt.beta2") cfg.beta2 = to_real(key, val);
        else if (key == "opt.eps") cfg.adam_eps = to_real(key, val);
        else if (key == "loss.weights") {
            cfg.loss_weights.clear();
            std::istringstream ws(val);
            std::string tok;
            while (std::getline(ws, tok, ',')) cfg.loss_weights.push_back(to_real(key, trim(tok)));
        } else if (key == "loss.monochrome") cfg.monochrome = to_bool(key, val);
        else if (key == "aug.enabled") cfg.augment = to_bool(key, val);
        else if (key == "aug.rotate_deg") cfg.aug.rotate_deg = to_real(key, val);
        else if (key == "aug.full_circle") cfg.aug.full_circle = to_bool(key, val);
        else if (key == "aug.scale_min") cfg.aug.scale_min = to_real(key, val);
        else if (key == "aug.scale_max") cfg.aug.scale_max = to_real(key, val);
        else if (key == "aug.shear") cfg.aug.shear = to_real(key, val);
        else if (key == "aug.translate") cfg.aug.translate_frac = to_real(key, val);
        else if (key == "head.kind") cfg.head_kind = val;
        else if (key == "head.hidden") cfg.head_hidden = static_cast<int>(to_int(key, val));
        else if (key == "head.frozen") cfg.head_frozen = to_bool(key, val);
        else if (key == "head.epochs") cfg.head_epochs = static_cast<int>(to_int(key, val));
        else if (key == "head.classes") cfg.classes = static_cast<int>(to_int(key, val));
        else if (key == "shapectx.levels") cfg.shapectx_levels = static_cast<int>(to_int(key, val));
        else if (key == "recon.count") cfg.recon_count = static_cast<int>(to_int(key, val));
        else if (key == "recon.split") cfg.recon_split = val;
        else if (key == "threads") cfg.threads = static_cast<int>(to_int(key, val));
        else if (key == "out") cfg.out = val;
        else if (key == "checkpoint.save_optimizer") cfg.save_optimizer = to_bool(key, val);
        else bad("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
    }
    cfg.validate();
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    check(is.good(), ErrorCode::ConfigError, "cannot open config file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_config_text(text);
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "dataset.kind = " << cfg.dataset_kind << "\n";
    if (!cfg.train_path.empty()) os << "dataset.train = " << cfg.train_path << "\n";
    if (!cfg.test_path.empty()) os << "dataset.test = " << cfg.test_path << "\n";
    os << "dataset.grid = " << cfg.grid << "\n";
    os << "synth.style = " << cfg.synth_style << "\n";
    os << "synth.count = " << cfg.synth_count << "\n";
    os << "synth.test_count = " << cfg.synth_test_count << "\n";
    os << "synth.size = " << cfg.synth_size << "\n";
    os << "synth.d = " << cfg.synth_d << "\n";
    os << "synth.occupancy = " << cfg.synth_occupancy << "\n";
    os << "data.seed = " << cfg.data_seed << "\n";
    os << "digits.train_count = " << cfg.digits_train << "\n";
    os << "digits.test_count = " << cfg.digits_test << "\n";
    os << "net.d = " << cfg.net.d << "\n";
    os << "net.k = " << cfg.net.k << "\n";
    os << "net.growth = " << (cfg.net.growth == Growth::Doubling ? "doubling" : "linear") << "\n";
    os << "net.block = " << (cfg.net.block == BlockStyle::SingleSSC ? "single" : "residual2") << "\n";
    os << "net.scales = " << cfg.net.scales << "\n";
    os << "net.mode = " << (cfg.net.mode == LatentMode::ToPoint ? "to_point" : "fixed_factor") << "\n";
    os << "net.in_channels = " << cfg.net.in_channels << "\n";
    os << "net.latent_blocks = " << cfg.net.latent_ssc_blocks << "\n";
    os << "train.epochs = " << cfg.epochs << "\n";
    os << "train.steps = " << cfg.steps << "\n";
    os << "train.batch = " << cfg.batch << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "opt.kind = " << cfg.opt_kind << "\n";
    os << "opt.lr = " << cfg.lr << "\n";
    os << "loss.monochrome = " << (cfg.monochrome ? "true" : "false") << "\n";
    os << "aug.enabled = " << (cfg.augment ? "true" : "false") << "\n";
    os << "head.kind = " << cfg.head_kind << "\n";
    os << "head.hidden = " << cfg.head_hidden << "\n";
    os << "head.frozen = " << (cfg.head_frozen ? "true" : "false") << "\n";
    os << "head.epochs = " << cfg.head_epochs << "\n";
    os << "head.classes = " << cfg.classes << "\n";
    os << "threads = " << cfg.threads << "\n";
    os << "out = " << cfg.out << "\n";
    return os.str();
}

} // namespace spae
