#include "randsac/config.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "randsac/errors.hpp"

namespace randsac {

const std::map<std::string, std::string>& ExperimentConfig::defaults() {
    static const std::map<std::string, std::string> kDefaults = {
        // model
        {"dim", "64"},
        {"heads", "4"},
        {"layers_enc", "4"},
        {"layers_dec", "2"},
        {"mlp_ratio", "4"},
        {"patch", "4"},
        // data
        {"dataset", "cifar10"},  // cifar10 | cifar100 | dir
        {"data_path", "data/cifar-10-batches-bin"},
        {"subset", "0"},       // 0 = full split
        {"test_subset", "0"},  // 0 = full split
        // pretraining
        {"base_lr", "0.001"},
        {"batch_size", "64"},
        {"weight_decay", "0.05"},
        {"beta1", "0.9"},
        {"beta2", "0.999"},
        {"warmup_epochs", "10"},
        {"epochs", "100"},
        {"seed", "0"},
        {"loss_mode", "raw"},  // raw | norm_pix
        {"exclude_first_segment", "false"},
        {"grad_clip", "0"},
        {"augment", "true"},
        // partition / serialization
        {"partition", "patch"},  // patch | square | blob
        {"square_m", "2"},
        {"blob_k", "5"},
        {"strict_blob", "false"},
        {"shuffle_tokens", "false"},
        {"serialization", "random"},  // raster | random | hierarchical
        {"hierarchy", ""},            // e.g. "7,3"; empty = flat
        // evaluation
        {"probe_epochs", "30"},
        {"probe_lr", "0.01"},
        {"probe_batch", "128"},
        {"finetune_epochs", "30"},
        {"finetune_lr", "0.0005"},
        {"finetune_batch", "64"},
        {"layer_decay", "0.65"},
        // operational
        {"out_dir", "out"},
        {"checkpoint", ""},
        {"checkpoint_every", "0"},  // epochs; 0 = final only
        {"deterministic", "true"},
    };
    return kDefaults;
}

ExperimentConfig::ExperimentConfig() : values_(defaults()) {}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
}

void ExperimentConfig::apply_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not of the form key=value");
    set(kv.substr(0, eq), kv.substr(eq + 1));
}

void ExperimentConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

const std::string& ExperimentConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

int ExperimentConfig::get_int(const std::string& key) const {
    try {
        return std::stoi(get(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config key '" + key + "' is not an integer: '" + get(key) + "'");
    }
}

double ExperimentConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::logic_error&) {
        throw ConfigError("config key '" + key + "' is not a number: '" + get(key) + "'");
    }
}

bool ExperimentConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<int> ExperimentConfig::get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(get(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::logic_error&) {
            throw ConfigError("config key '" + key + "' has non-integer element '" + item + "'");
        }
    }
    return out;
}

std::string ExperimentConfig::hash() const {
    // FNV-1a over the sorted effective key=value pairs (std::map iterates in
    // key order, so the hash is independent of insertion order).
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        h ^= 0x1f;
        h *= 1099511628211ull;
    };
    for (const auto& [k, v] : values_) {
        mix(k);
        mix(v);
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace randsac
