#include "leukopipe/nn/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "leukopipe/error.hpp"

namespace leukopipe::nn {

static_assert(std::endian::native == std::endian::little, "weight archives assume a little-endian host");

namespace {

constexpr char kMagic[4] = {'L', 'K', 'P', 'W'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::filesystem::path& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw Error(ErrorCode::ParseError, "truncated weight file: " + path.string());
    return v;
}

bool skipped(const std::string& name, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes)
        if (name.rfind(p, 0) == 0) return true;
    return false;
}

}  // namespace

void write_tensors(const std::filesystem::path& path, const NamedTensors& tensors) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error(ErrorCode::IoFailure, "cannot write " + tmp.string());
        os.write(kMagic, 4);
        put<std::uint32_t>(os, kVersion);
        put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
        for (const auto& [name, t] : tensors) {
            put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            put<std::uint32_t>(os, static_cast<std::uint32_t>(t.ndim()));
            for (int d : t.shape()) put<std::int64_t>(os, d);
            os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
        }
        os.flush();
        if (!os) throw Error(ErrorCode::IoFailure, "write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot rename " + tmp.string() + ": " + ec.message());
}

NamedTensors read_tensors(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw Error(ErrorCode::ParseError, "not a weight archive: " + path.string());
    const auto version = get<std::uint32_t>(is, path);
    if (version != kVersion)
        throw Error(ErrorCode::SchemaVersionMismatch,
                    "weight archive version " + std::to_string(version) + " in " + path.string());
    const auto count = get<std::uint32_t>(is, path);
    NamedTensors out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = get<std::uint32_t>(is, path);
        if (len > 4096) throw Error(ErrorCode::ParseError, "implausible tensor name length in " + path.string());
        std::string name(len, '\0');
        if (!is.read(name.data(), len)) throw Error(ErrorCode::ParseError, "truncated weight file: " + path.string());
        const auto ndim = get<std::uint32_t>(is, path);
        if (ndim > 8) throw Error(ErrorCode::ParseError, "implausible tensor rank in " + path.string());
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            const auto dim = get<std::int64_t>(is, path);
            if (dim < 0 || dim > (1 << 28)) throw Error(ErrorCode::ParseError, "bad tensor dim in " + path.string());
            shape.push_back(static_cast<int>(dim));
        }
        Tensor t(shape);
        if (!is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float))))
            throw Error(ErrorCode::ParseError, "truncated weight file: " + path.string());
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

NamedTensors state_dict(Module& module) {
    NamedTensors out;
    for (auto& [name, p] : named_parameters(module)) out.emplace_back(name, p->value);
    return out;
}

LoadResult load_state_dict(Module& module, const NamedTensors& tensors, const std::vector<std::string>& skip_prefixes) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : tensors)
        if (!skipped(name, skip_prefixes)) by_name[name] = &t;
    LoadResult result;
    for (auto& [name, p] : named_parameters(module)) {
        if (skipped(name, skip_prefixes)) continue;
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            result.missing.push_back(name);
            continue;
        }
        if (it->second->shape() != p->value.shape())
            throw Error(ErrorCode::ShapeMismatch, "tensor " + name + ": expected " + shape_string(p->value.shape()) +
                                                      ", file has " + shape_string(it->second->shape()));
        p->value = *it->second;
        result.loaded.push_back(name);
        by_name.erase(it);
    }
    for (const auto& [name, t] : by_name) result.unexpected.push_back(name);
    return result;
}

}  // namespace leukopipe::nn
