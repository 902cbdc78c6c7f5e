#include "fpdrl/diff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fpdrl::diff {

namespace {

constexpr char kMagic[8] = {'F', 'P', 'D', 'R', 'L', 'C', 'K', 'P'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t>& buffer() { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    Reader(const std::uint8_t* data, std::size_t n) : data_(data), n_(n) {}

    void need(std::size_t k) const {
        if (pos_ + k > n_) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t len = u32();
        need(len);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), len);
        pos_ += len;
        return s;
    }
    void magic() {
        need(sizeof(kMagic));
        if (std::memcmp(data_, kMagic, sizeof(kMagic)) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
        pos_ += sizeof(kMagic);
    }
    std::size_t pos() const { return pos_; }

private:
    const std::uint8_t* data_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(std::string name, DenseArray value) {
    if (index_.contains(name)) throw CheckpointError("duplicate checkpoint entry " + name);
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
}

bool Checkpoint::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

const DenseArray& Checkpoint::get(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw CheckpointError("checkpoint has no entry " + std::string(name));
    return entries_[it->second].second;
}

std::string Checkpoint::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw CheckpointError("checkpoint metadata missing key " + key);
    return it->second;
}

void Checkpoint::put_params(std::string_view prefix, const ParamSet& params) {
    for (const auto& e : params) put(std::string(prefix) + "/" + e.name, e.value);
}

void Checkpoint::load_params(std::string_view prefix, ParamSet& params) const {
    for (auto& e : params) {
        const DenseArray& v = get(std::string(prefix) + "/" + e.name);
        if (!(v.shape() == e.value.shape())) {
            throw CheckpointError("shape mismatch for " + e.name + ": checkpoint " + v.shape().str() + " vs model " +
                                  e.value.shape().str());
        }
        e.value = v;
    }
}

void Checkpoint::put_adam(std::string_view prefix, const AdamState& state) {
    const std::string p(prefix);
    put(p + "/t", DenseArray::scalar(static_cast<double>(state.t)));
    for (std::size_t i = 0; i < state.m.size(); ++i) {
        put(p + "/m/" + std::to_string(i), state.m[i]);
        put(p + "/v/" + std::to_string(i), state.v[i]);
    }
}

void Checkpoint::load_adam(std::string_view prefix, AdamState& state) const {
    const std::string p(prefix);
    state.t = static_cast<std::int64_t>(get(p + "/t").item());
    for (std::size_t i = 0; i < state.m.size(); ++i) {
        const DenseArray& m = get(p + "/m/" + std::to_string(i));
        const DenseArray& v = get(p + "/v/" + std::to_string(i));
        if (!(m.shape() == state.m[i].shape()) || !(v.shape() == state.v[i].shape())) {
            throw CheckpointError("adam moment shape mismatch under " + p);
        }
        state.m[i] = m;
        state.v[i] = v;
    }
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
        w.str(k);
        w.str(v);
    }
    w.u32(static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, arr] : entries_) {
        w.str(name);
        const Shape& s = arr.shape();
        w.u32(static_cast<std::uint32_t>(s.rank()));
        for (std::size_t i = 0; i < s.rank(); ++i) w.u64(s[i]);
        for (double v : arr.values()) w.f64(v);
    }
    auto& buf = w.buffer();
    const std::uint64_t sum = fnv1a(buf.data(), buf.size());
    w.u64(sum);
    return std::move(buf);
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < sizeof(kMagic) + 8) throw CheckpointError("checkpoint too short");
    const std::size_t body = bytes.size() - 8;
    Reader tail(bytes.data() + body, 8);
    if (tail.u64() != fnv1a(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch");

    Reader r(bytes.data(), body);
    r.magic();
    const std::uint32_t version = r.u32();
    if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    const std::uint32_t n_meta = r.u32();
    for (std::uint32_t i = 0; i < n_meta; ++i) {
        std::string k = r.str();
        ck.meta[k] = r.str();
    }
    const std::uint32_t n_entries = r.u32();
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        std::string name = r.str();
        const std::uint32_t rank = r.u32();
        if (rank == 0 || rank > Shape::kMaxRank) throw CheckpointError("bad rank for entry " + name);
        std::vector<std::size_t> ext(rank);
        std::size_t numel = 1;
        for (auto& e : ext) {
            e = static_cast<std::size_t>(r.u64());
            if (e == 0) throw CheckpointError("zero extent in entry " + name);
            numel *= e;
        }
        r.need(numel * 8);
        std::vector<double> vals(numel);
        for (auto& v : vals) v = r.f64();
        ck.put(std::move(name), DenseArray(Shape(std::span<const std::size_t>(ext)), std::move(vals)));
    }
    if (r.pos() != body) throw CheckpointError("trailing bytes in checkpoint");
    return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    const auto bytes = serialize();
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot open " + tmp + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

}  // namespace fpdrl::diff
