#include "bbcu/config.hpp"

#include <fstream>
#include <sstream>

namespace bbcu {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, int line) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(line, "expected a boolean, got '" + v + "'");
}

int parse_int(const std::string& v, int line) {
    try {
        size_t used = 0;
        const int x = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw ConfigError(line, "expected an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& v, int line) {
    try {
        size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw ConfigError(line, "expected a number, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& v, int line) {
    try {
        size_t used = 0;
        const uint64_t x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return x;
    } catch (...) {
        throw ConfigError(line, "expected an unsigned integer, got '" + v + "'");
    }
}

std::vector<int> parse_int_list(const std::string& v, int line) {
    std::vector<int> out;
    std::istringstream is(v);
    std::string tok;
    while (is >> tok) out.push_back(parse_int(tok, line));
    return out;
}

} // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string raw;
    std::string section;
    int line = 0;
    bool degradation_set = false;

    while (std::getline(is, raw)) {
        ++line;
        std::string s = raw;
        if (const auto h = s.find_first_of("#;"); h != std::string::npos) s = s.substr(0, h);
        s = trim(s);
        if (s.empty()) continue;

        if (s.front() == '[') {
            if (s.back() != ']') throw ConfigError(line, "unterminated section header");
            section = trim(s.substr(1, s.size() - 2));
            if (section != "network" && section != "train" && section != "data" &&
                section != "output")
                throw ConfigError(line, "unknown section [" + section + "]");
            continue;
        }

        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value'");
        const std::string key = trim(s.substr(0, eq));
        const std::string val = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(line, "empty key");
        if (val.empty()) throw ConfigError(line, "empty value for '" + key + "'");
        if (section.empty()) throw ConfigError(line, "key '" + key + "' outside any section");

        if (section == "network") {
            if (key == "task") {
                if (val == "sr") cfg.net.task = Task::SR;
                else if (val == "denoise") cfg.net.task = Task::Denoise;
                else if (val == "deblock") cfg.net.task = Task::Deblock;
                else throw ConfigError(line, "task must be sr|denoise|deblock");
            } else if (key == "scale") {
                cfg.net.scale = parse_int(val, line);
            } else if (key == "channels") {
                cfg.net.channels = parse_int(val, line);
            } else if (key == "body_blocks") {
                cfg.net.body_blocks = parse_int(val, line);
            } else if (key == "body_unit_convs") {
                cfg.net.body_unit_convs = parse_int(val, line);
            } else if (key == "variant") {
                if (val == "V1") cfg.net.variant = Variant::V1;
                else if (val == "V2") cfg.net.variant = Variant::V2;
                else if (val == "V3") cfg.net.variant = Variant::V3;
                else if (val == "V4") cfg.net.variant = Variant::V4;
                else throw ConfigError(line, "variant must be V1|V2|V3|V4");
            } else if (key == "k") {
                cfg.net.k = parse_double(val, line);
            } else if (key == "scale_scope") {
                if (val == "per_layer") cfg.net.scope = ScaleScope::PerLayer;
                else if (val == "per_filter") cfg.net.scope = ScaleScope::PerFilter;
                else throw ConfigError(line, "scale_scope must be per_layer|per_filter");
            } else if (key == "binarize_head") {
                cfg.net.binarized.head = parse_bool(val, line);
            } else if (key == "binarize_body") {
                cfg.net.binarized.body = parse_bool(val, line);
            } else if (key == "binarize_upsampling") {
                cfg.net.binarized.upsampling = parse_bool(val, line);
            } else if (key == "binarize_tail") {
                cfg.net.binarized.tail = parse_bool(val, line);
            } else if (key == "no_residual_at") {
                cfg.net.no_residual_at = parse_int(val, line);
            } else {
                throw ConfigError(line, "unknown key '" + key + "' in [network]");
            }
        } else if (section == "train") {
            if (key == "lr") cfg.train.lr = parse_double(val, line);
            else if (key == "batch") cfg.train.batch = parse_int(val, line);
            else if (key == "patch") cfg.train.patch = parse_int(val, line);
            else if (key == "steps") cfg.train.steps = parse_int(val, line);
            else if (key == "seed") cfg.train.seed = parse_u64(val, line);
            else if (key == "halve_at") cfg.train.halve_at = parse_int_list(val, line);
            else if (key == "val_interval") cfg.train.val_interval = parse_int(val, line);
            else if (key == "val_patches") cfg.train.val_patches = parse_int(val, line);
            else if (key == "threads") cfg.train.threads = parse_int(val, line);
            else throw ConfigError(line, "unknown key '" + key + "' in [train]");
        } else if (section == "data") {
            if (key == "train_dir") {
                cfg.data.train_dir = val;
            } else if (key == "lq_dir") {
                cfg.data.lq_dir = val;
            } else if (key == "degradation") {
                degradation_set = true;
                if (val == "awgn") cfg.data.degradation.kind = DegradationSpec::Kind::Awgn;
                else if (val == "bicubic")
                    cfg.data.degradation.kind = DegradationSpec::Kind::BicubicDown;
                else if (val == "paired")
                    cfg.data.degradation.kind = DegradationSpec::Kind::PairedFiles;
                else throw ConfigError(line, "degradation must be awgn|bicubic|paired");
            } else if (key == "sigma") {
                // 8-bit units: sigma = 25 means 25/255 on the [0,1] scale
                const double s = parse_double(val, line);
                if (s <= 0.0) throw ConfigError(line, "sigma must be > 0");
                cfg.data.degradation.sigma = s / 255.0;
            } else if (key == "synthetic_count") {
                cfg.data.synthetic_count = parse_int(val, line);
            } else if (key == "synthetic_size") {
                cfg.data.synthetic_size = parse_int(val, line);
            } else {
                throw ConfigError(line, "unknown key '" + key + "' in [data]");
            }
        } else { // output
            if (key == "dir") cfg.out_dir = val;
            else throw ConfigError(line, "unknown key '" + key + "' in [output]");
        }
    }

    if (!degradation_set) {
        cfg.data.degradation.kind = cfg.net.task == Task::SR ? DegradationSpec::Kind::BicubicDown
                                                             : DegradationSpec::Kind::Awgn;
    }
    cfg.data.degradation.scale = cfg.net.scale;

    // surface spec violations with the config as context
    const auto violations = cfg.net.validate();
    if (!violations.empty()) {
        std::string msg = "network section is invalid:";
        for (const auto& v : violations) msg += " " + v + ";";
        throw ConfigError(0, msg);
    }
    try {
        cfg.train.validate_or_throw();
    } catch (const ValueError& e) {
        throw ConfigError(0, std::string("train section is invalid: ") + e.what());
    }
    if (cfg.train.patch % cfg.net.scale != 0)
        throw ConfigError(0, "train.patch must be divisible by network.scale");
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

} // namespace bbcu
