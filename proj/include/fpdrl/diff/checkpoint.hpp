#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fpdrl/diff/adam.hpp"
#include "fpdrl/diff/params.hpp"

namespace fpdrl::diff {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Flat binary container: named fp64 arrays plus string metadata.
///
/// Layout (all integers little-endian):
///   magic "FPDRLCKP" | u32 version | u32 meta count
///   per meta:  u32 key len | key | u32 value len | value
///   u32 entry count
///   per entry: u32 name len | name | u32 rank | u64 extent * rank | f64 * numel
///   u64 FNV-1a checksum of all preceding bytes
///
/// Metadata is kept in a sorted map and entries in insertion order, so the
/// byte stream is a pure function of the contents.
class Checkpoint {
public:
    static constexpr std::uint32_t kVersion = 1;

    std::map<std::string, std::string> meta;

    void put(std::string name, DenseArray value);
    bool contains(std::string_view name) const;
    const DenseArray& get(std::string_view name) const;
    const std::vector<std::pair<std::string, DenseArray>>& entries() const { return entries_; }

    /// Stores every entry of `params` under "<prefix>/<entry name>".
    void put_params(std::string_view prefix, const ParamSet& params);
    /// Loads values into an existing set; names and shapes must match.
    void load_params(std::string_view prefix, ParamSet& params) const;

    void put_adam(std::string_view prefix, const AdamState& state);
    void load_adam(std::string_view prefix, AdamState& state) const;

    std::string meta_at(const std::string& key) const;

    std::vector<std::uint8_t> serialize() const;
    static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    std::vector<std::pair<std::string, DenseArray>> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace fpdrl::diff
