#include "imdp/config.hpp"

#include <fstream>
#include <sstream>

namespace imdp {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

template <class T>
std::string num_str(T v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

void validate_config(const Config& cfg) {
    check_or<ConfigError>(cfg.lr > 0, "lr must be positive");
    check_or<ConfigError>(cfg.batch_size > 0, "batch_size must be positive");
    check_or<ConfigError>(cfg.epochs > 0, "epochs must be positive");
    check_or<ConfigError>(cfg.warmup_epochs >= 0, "warmup_epochs must be nonnegative");
    check_or<ConfigError>(cfg.img_loss_warmup_epochs >= 0,
                          "img_loss_warmup_epochs must be nonnegative");
    check_or<ConfigError>(cfg.image_size > 0 && cfg.image_size % 8 == 0,
                          "image_size must be a positive multiple of 8");
    check_or<ConfigError>(cfg.mask_threshold > 0.0 && cfg.mask_threshold < 1.0,
                          "mask_threshold must be in (0,1)");
    check_or<ConfigError>(cfg.k_max > 0, "k_max must be positive");
    check_or<ConfigError>(cfg.focal_gamma >= 0.0, "focal_gamma must be nonnegative");
    check_or<ConfigError>(cfg.focal_alpha >= 0.0 && cfg.focal_alpha <= 1.0,
                          "focal_alpha must be in [0,1]");
    check_or<ConfigError>(cfg.focal_clamp_eps > 0.0 && cfg.focal_clamp_eps < 0.5,
                          "focal_clamp_eps must be a small positive value");
    check_or<ConfigError>(cfg.min_crop_fraction > 0.0 && cfg.min_crop_fraction <= 1.0,
                          "min_crop_fraction must be in (0,1]");
    check_or<ConfigError>(cfg.encoder_channels % 4 == 0, "encoder_channels must be divisible by 4");
    check_or<ConfigError>(cfg.prompt_dim % 4 == 0, "prompt_dim must be divisible by 4");
    check_or<ConfigError>(cfg.bayar_kernels > 0 && cfg.bayar_kernel_size % 2 == 1,
                          "bayar kernels must be odd-sized and at least one");
    if (!cfg.force_view.empty()) view_from_string(cfg.force_view);  // throws on bad name
}

std::map<std::string, std::string> config_to_kv(const Config& c) {
    std::map<std::string, std::string> kv;
    kv["lr"] = num_str(c.lr);
    kv["batch_size"] = num_str(c.batch_size);
    kv["epochs"] = num_str(c.epochs);
    kv["warmup_epochs"] = num_str(c.warmup_epochs);
    kv["warmup_start_factor"] = num_str(c.warmup_start_factor);
    kv["weight_decay"] = num_str(c.weight_decay);
    kv["beta1"] = num_str(c.beta1);
    kv["beta2"] = num_str(c.beta2);
    kv["clip_norm"] = num_str(c.clip_norm);
    kv["max_steps"] = num_str(c.max_steps);
    kv["lambda1"] = num_str(c.lambda1);
    kv["lambda2"] = num_str(c.lambda2);
    kv["lambda3"] = num_str(c.lambda3);
    kv["img_loss_warmup_epochs"] = num_str(c.img_loss_warmup_epochs);
    kv["focal_gamma"] = num_str(c.focal_gamma);
    kv["focal_alpha"] = num_str(c.focal_alpha);
    kv["focal_clamp_eps"] = num_str(c.focal_clamp_eps);
    kv["mask_threshold"] = num_str(c.mask_threshold);
    kv["k_max"] = num_str(c.k_max);
    kv["force_view"] = c.force_view;
    kv["image_size"] = num_str(c.image_size);
    kv["augment"] = c.augment ? "true" : "false";
    kv["flip_prob"] = num_str(c.flip_prob);
    kv["min_crop_fraction"] = num_str(c.min_crop_fraction);
    kv["seed"] = num_str(c.seed);
    kv["branch_stem"] = num_str(c.branch_stem);
    kv["branch_mid"] = num_str(c.branch_mid);
    kv["branch_feat"] = num_str(c.branch_feat);
    kv["encoder_channels"] = num_str(c.encoder_channels);
    kv["prompt_dim"] = num_str(c.prompt_dim);
    kv["bayar_kernels"] = num_str(c.bayar_kernels);
    kv["bayar_kernel_size"] = num_str(c.bayar_kernel_size);
    kv["noiseprint_hidden"] = num_str(c.noiseprint_hidden);
    return kv;
}

Config config_from_kv(const std::map<std::string, std::string>& kv) {
    Config c;
    auto get_d = [&](const char* k, double& out) {
        auto it = kv.find(k);
        if (it != kv.end()) {
            try {
                out = std::stod(it->second);
            } catch (const std::exception&) {
                throw ConfigError(std::string("bad numeric value for ") + k);
            }
        }
    };
    auto get_i = [&](const char* k, int& out) {
        double v = out;
        get_d(k, v);
        out = static_cast<int>(v);
    };
    get_d("lr", c.lr);
    get_i("batch_size", c.batch_size);
    get_i("epochs", c.epochs);
    get_i("warmup_epochs", c.warmup_epochs);
    get_d("warmup_start_factor", c.warmup_start_factor);
    get_d("weight_decay", c.weight_decay);
    get_d("beta1", c.beta1);
    get_d("beta2", c.beta2);
    get_d("clip_norm", c.clip_norm);
    get_i("max_steps", c.max_steps);
    get_d("lambda1", c.lambda1);
    get_d("lambda2", c.lambda2);
    get_d("lambda3", c.lambda3);
    get_i("img_loss_warmup_epochs", c.img_loss_warmup_epochs);
    get_d("focal_gamma", c.focal_gamma);
    get_d("focal_alpha", c.focal_alpha);
    get_d("focal_clamp_eps", c.focal_clamp_eps);
    get_d("mask_threshold", c.mask_threshold);
    get_i("k_max", c.k_max);
    if (auto it = kv.find("force_view"); it != kv.end()) c.force_view = it->second;
    get_i("image_size", c.image_size);
    if (auto it = kv.find("augment"); it != kv.end()) {
        check_or<ConfigError>(it->second == "true" || it->second == "false",
                              "augment must be true or false");
        c.augment = it->second == "true";
    }
    get_d("flip_prob", c.flip_prob);
    get_d("min_crop_fraction", c.min_crop_fraction);
    if (auto it = kv.find("seed"); it != kv.end()) c.seed = std::stoull(it->second);
    get_i("branch_stem", c.branch_stem);
    get_i("branch_mid", c.branch_mid);
    get_i("branch_feat", c.branch_feat);
    get_i("encoder_channels", c.encoder_channels);
    get_i("prompt_dim", c.prompt_dim);
    get_i("bayar_kernels", c.bayar_kernels);
    get_i("bayar_kernel_size", c.bayar_kernel_size);
    get_i("noiseprint_hidden", c.noiseprint_hidden);

    // Reject unknown keys so typos do not silently fall back to defaults.
    auto known = config_to_kv(Config{});
    for (const auto& [k, v] : kv)
        check_or<ConfigError>(known.count(k) > 0, "unknown config key: " + k);

    validate_config(c);
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    check_or<ConfigError>(in.good(), "cannot open config file: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        check_or<ConfigError>(eq != std::string::npos, "expected key = value, got: " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return config_from_kv(kv);
}

void save_config(const Config& cfg, const std::string& path) {
    std::ofstream out(path);
    check_or<ConfigError>(out.good(), "cannot write config file: " + path);
    for (const auto& [k, v] : config_to_kv(cfg)) out << k << " = " << v << "\n";
}

}  // namespace imdp
