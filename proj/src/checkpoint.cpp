#include "radiodun/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace radiodun {

namespace {

constexpr char kMagic[8] = {'R', 'D', 'U', 'N', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get_bytes(std::istream& is, void* p, size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
        throw std::runtime_error("checkpoint: truncated archive");
}

void put_u32(std::ostream& os, uint32_t v) { put_bytes(os, &v, sizeof v); }
void put_u64(std::ostream& os, uint64_t v) { put_bytes(os, &v, sizeof v); }

uint32_t get_u32(std::istream& is) {
    uint32_t v = 0;
    get_bytes(is, &v, sizeof v);
    return v;
}

uint64_t get_u64(std::istream& is) {
    uint64_t v = 0;
    get_bytes(is, &v, sizeof v);
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    put_bytes(os, s.data(), s.size());
}

std::string get_string(std::istream& is) {
    const uint64_t n = get_u64(is);
    if (n > (1ull << 30)) throw std::runtime_error("checkpoint: unreasonable string length");
    std::string s(n, '\0');
    if (n) get_bytes(is, s.data(), n);
    return s;
}

void put_section(std::ostream& os, const std::map<std::string, nn::Array>& sec) {
    put_u64(os, sec.size());
    for (const auto& [name, arr] : sec) {
        put_string(os, name);
        put_u64(os, static_cast<uint64_t>(arr.size()));
        put_bytes(os, arr.data(), static_cast<size_t>(arr.size()) * sizeof(double));
    }
}

std::map<std::string, nn::Array> get_section(std::istream& is) {
    std::map<std::string, nn::Array> sec;
    const uint64_t count = get_u64(is);
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = get_string(is);
        const uint64_t n = get_u64(is);
        if (n > (1ull << 32)) throw std::runtime_error("checkpoint: unreasonable array length");
        nn::Array arr(static_cast<long>(n));
        if (n) get_bytes(is, arr.data(), static_cast<size_t>(n) * sizeof(double));
        sec.emplace(std::move(name), std::move(arr));
    }
    return sec;
}

/// Copies a named-array section into the matching tensors of a live store.
void write_back(const std::map<std::string, nn::Tensor>& dst,
                const std::map<std::string, nn::Array>& src, const char* what) {
    if (dst.size() != src.size())
        throw std::runtime_error(std::string("checkpoint: ") + what + " count mismatch (model " +
                                 std::to_string(dst.size()) + ", archive " +
                                 std::to_string(src.size()) + ")");
    for (const auto& [name, t] : dst) {
        auto it = src.find(name);
        if (it == src.end())
            throw std::runtime_error(std::string("checkpoint: missing ") + what + " '" + name + "'");
        if (it->second.size() != static_cast<long>(t.numel()))
            throw std::runtime_error(std::string("checkpoint: size mismatch for ") + what + " '" +
                                     name + "'");
        nn::Tensor handle = t;
        handle.mutable_value() = it->second;
    }
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    put_bytes(os, kMagic, sizeof kMagic);
    put_u32(os, kVersion);
    put_string(os, config.to_json());
    put_u64(os, epoch);
    put_string(os, rng_state);
    put_section(os, params);
    put_section(os, buffers);
    put_section(os, optim);
    os.flush();
    if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open: " + path);
    char magic[8];
    get_bytes(is, magic, sizeof magic);
    if (std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    const uint32_t version = get_u32(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ck;
    ck.config = ModelConfig::from_json(get_string(is));
    ck.epoch = get_u64(is);
    ck.rng_state = get_string(is);
    ck.params = get_section(is);
    ck.buffers = get_section(is);
    ck.optim = get_section(is);
    return ck;
}

Checkpoint snapshot(const RadioDUN& model, const nn::AdamW* opt, uint64_t epoch,
                    const std::string& rng_state) {
    Checkpoint ck;
    ck.config = model.config();
    ck.epoch = epoch;
    ck.rng_state = rng_state;
    for (const auto& [name, t] : model.params().params()) ck.params.emplace(name, t.value());
    for (const auto& [name, t] : model.params().buffers()) ck.buffers.emplace(name, t.value());
    if (opt) ck.optim = opt->export_state();
    return ck;
}

void restore(RadioDUN& model, nn::AdamW* opt, const Checkpoint& ck) {
    write_back(model.params().params(), ck.params, "parameter");
    write_back(model.params().buffers(), ck.buffers, "buffer");
    if (opt && !ck.optim.empty()) opt->import_state(ck.optim);
}

RadioDUN model_from_checkpoint(const Checkpoint& ck) {
    RadioDUN model(ck.config, /*seed=*/0);
    restore(model, nullptr, ck);
    return model;
}

}  // namespace radiodun
