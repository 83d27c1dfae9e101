#pragma once

#include <string>

#include "bbcu/train.hpp"

namespace bbcu {

// Line-oriented `key = value` config with [section] headers. '#' and ';'
// start comments. Unknown sections/keys and malformed values raise
// ConfigError with the 1-based line number.
struct RunConfig {
    NetworkSpec net;
    TrainConfig train;
    struct DataConfig {
        std::string train_dir; // PNG directory; empty = bundled synthetic set
        std::string lq_dir;    // paired mode
        DegradationSpec degradation;
        int synthetic_count = 8;
        int synthetic_size = 96;
    } data;
    std::string out_dir = "run";
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

} // namespace bbcu
