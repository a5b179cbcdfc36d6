#include "proxtune/param_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include "proxtune/errors.hpp"

namespace proxtune {

std::size_t ModelParameters::total_size() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.values.size();
    return n;
}

const ParameterGroup* ModelParameters::find(const std::string& name) const {
    for (const auto& g : groups)
        if (g.name == name) return &g;
    return nullptr;
}

void snapshot_pretrained(ModelParameters& model) {
    for (auto& g : model.groups) g.snapshot = g.values;
}

double l2_deviation(const ParameterGroup& group) {
    if (group.values.size() != group.snapshot.size())
        throw ContractViolation("l2_deviation: snapshot not taken for group " + group.name);
    double ss = 0.0;
    for (std::size_t i = 0; i < group.values.size(); ++i) {
        const double d = group.values[i] - group.snapshot[i];
        ss += d * d;
    }
    return std::sqrt(ss);
}

double module_deviation(const ModelParameters& model, int module_index) {
    double ss = 0.0;
    for (const auto& g : model.groups) {
        if (g.module_index != module_index) continue;
        const double d = l2_deviation(g);
        ss += d * d;
    }
    return std::sqrt(ss);
}

void apply_freeze_mask(ModelParameters& model, const FreezeMask& mask) {
    for (int idx : mask.frozen_modules) {
        if (idx < 1 || idx > model.module_count)
            throw ConfigError("freeze mask index " + std::to_string(idx) +
                              " outside 1.." + std::to_string(model.module_count));
    }
    for (auto& g : model.groups)
        if (mask.frozen_modules.count(g.module_index)) g.frozen = true;
}

void validate(const ModelParameters& model) {
    std::unordered_set<std::string> names;
    std::unordered_set<int> indices;
    for (const auto& g : model.groups) {
        if (g.values.empty())
            throw ContractViolation("group " + g.name + " is empty");
        if (!g.snapshot.empty() && g.snapshot.size() != g.values.size())
            throw ContractViolation("group " + g.name + " snapshot length mismatch");
        if (!names.insert(g.name).second)
            throw ContractViolation("duplicate group name " + g.name);
        if (g.module_index < 1 || g.module_index > model.module_count)
            throw ContractViolation("group " + g.name + " module_index out of range");
        indices.insert(g.module_index);
    }
    for (int k = 1; k <= model.module_count; ++k)
        if (!indices.count(k))
            throw ContractViolation("module index " + std::to_string(k) + " has no groups");
}

namespace {

// All archive integers and doubles are little-endian.
void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}

void put_f64(std::ostream& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

constexpr char kMagic[8] = {'P', 'R', 'O', 'X', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void save_model(const ModelParameters& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(kMagic, sizeof kMagic);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(model.module_count));
    put_u32(out, static_cast<std::uint32_t>(model.groups.size()));
    for (const auto& g : model.groups) {
        put_u32(out, static_cast<std::uint32_t>(g.name.size()));
        out.write(g.name.data(), static_cast<std::streamsize>(g.name.size()));
        put_u32(out, static_cast<std::uint32_t>(g.module_index));
        out.put(g.frozen ? 1 : 0);
        out.put(g.from_scratch ? 1 : 0);
        put_u64(out, g.values.size());
        const bool has_snapshot = g.snapshot.size() == g.values.size();
        out.put(has_snapshot ? 1 : 0);
        for (double d : g.values) put_f64(out, d);
        if (has_snapshot)
            for (double d : g.snapshot) put_f64(out, d);
    }
    if (!out) throw IoError("write failed: " + path.string());
}

ModelParameters load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0)
        throw IoError("not a model archive: " + path.string());
    const std::uint32_t version = get_u32(in);
    if (version != kFormatVersion)
        throw IoError("unsupported archive version " + std::to_string(version));
    ModelParameters model;
    model.module_count = static_cast<int>(get_u32(in));
    const std::uint32_t group_count = get_u32(in);
    model.groups.reserve(group_count);
    for (std::uint32_t i = 0; i < group_count; ++i) {
        ParameterGroup g;
        const std::uint32_t name_len = get_u32(in);
        g.name.resize(name_len);
        in.read(g.name.data(), name_len);
        g.module_index = static_cast<int>(get_u32(in));
        g.frozen = in.get() != 0;
        g.from_scratch = in.get() != 0;
        const std::uint64_t n = get_u64(in);
        const bool has_snapshot = in.get() != 0;
        g.values.resize(n);
        for (auto& d : g.values) d = get_f64(in);
        if (has_snapshot) {
            g.snapshot.resize(n);
            for (auto& d : g.snapshot) d = get_f64(in);
        }
        if (!in) throw IoError("truncated archive: " + path.string());
        model.groups.push_back(std::move(g));
    }
    validate(model);
    return model;
}

}  // namespace proxtune
