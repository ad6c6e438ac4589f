#pragma once

#include <map>
#include <string>
#include <vector>

namespace randsac {

// Flat key=value experiment configuration. Precedence: CLI --set overrides >
// config file > built-in defaults. Unknown keys are rejected; the content
// hash covers every effective key and is stable under key reordering.
class ExperimentConfig {
public:
    ExperimentConfig();  // defaults only

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    void apply_override(const std::string& key_eq_value);  // "key=value"

    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;  // comma separated

    std::string hash() const;
    const std::map<std::string, std::string>& entries() const { return values_; }

    static const std::map<std::string, std::string>& defaults();

private:
    std::map<std::string, std::string> values_;
};

}  // namespace randsac
