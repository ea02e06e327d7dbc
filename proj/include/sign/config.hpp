#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sign {

// Flat `key = value` configuration with dotted namespaces. Every key must be
// registered; unknown keys and malformed values raise ConfigError naming the key.
class Config {
public:
    Config();  // registry defaults

    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    // Applies `key = value` lines on top of the current values. `#` starts a comment.
    void merge_text(const std::string& text);
    void set(const std::string& key, const std::string& value);
    // "key=value"
    void assign(const std::string& assignment);

    bool has(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    double real(const std::string& key) const;
    std::uint64_t integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<std::size_t> sizes(const std::string& key) const;

    // Every key in registry order, one `key = value` line each. Parsing the
    // result gives back an identical configuration.
    std::string resolved() const;
    // Hash of every setting that shapes the training trajectory; keys such as
    // train.steps, train.resume and output cadence are left out so a run can
    // be resumed or extended.
    std::uint64_t training_hash() const;

    static const std::vector<std::string>& keys();

private:
    std::map<std::string, std::string> values_;
};

}  // namespace sign
