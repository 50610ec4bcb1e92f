#include "imdp/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace imdp::checkpoint {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    check_or<CorruptFile>(in.good(), "checkpoint truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    std::uint32_t n = read_u32(in);
    check_or<CorruptFile>(n < (1u << 24), "checkpoint string length implausible");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    check_or<CorruptFile>(in.good(), "checkpoint truncated");
    return s;
}

}  // namespace

void save(const Model& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    check_or<CheckpointError>(out.good(), "cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, kVersion);

    auto kv = config_to_kv(model.config());
    write_u32(out, static_cast<std::uint32_t>(kv.size()));
    for (const auto& [k, v] : kv) {  // std::map: sorted, deterministic
        write_string(out, k);
        write_string(out, v);
    }

    nn::ParamList params = model.all_params();
    write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, var] : params) {
        write_string(out, name);
        const Tensor& t = var.value();
        write_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (int i = 0; i < t.rank(); ++i) write_u32(out, static_cast<std::uint32_t>(t.dim(i)));
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    check_or<CheckpointError>(out.good(), "checkpoint write failed: " + path);
}

Loaded load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check_or<CheckpointError>(in.good(), "cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, 8);
    check_or<CorruptFile>(in.good() && std::memcmp(magic, kMagic, 8) == 0,
                          "not a checkpoint file: " + path);
    std::uint32_t version = read_u32(in);
    check_or<VersionMismatch>(version == kVersion,
                              "checkpoint version " + std::to_string(version) +
                                  " unsupported (expected " + std::to_string(kVersion) + ")");

    std::uint32_t n_kv = read_u32(in);
    std::map<std::string, std::string> kv;
    for (std::uint32_t i = 0; i < n_kv; ++i) {
        std::string k = read_string(in);
        kv[k] = read_string(in);
    }
    Loaded loaded;
    loaded.config = config_from_kv(kv);
    loaded.model = std::make_unique<Model>(loaded.config);

    nn::ParamList params = loaded.model->all_params();
    std::uint32_t n_tensors = read_u32(in);
    check_or<CorruptFile>(n_tensors == params.size(),
                          "checkpoint tensor count does not match the model");
    for (auto& [name, var] : params) {
        std::string stored = read_string(in);
        check_or<CorruptFile>(stored == name, "checkpoint tensor order mismatch at " + name);
        std::uint32_t rank = read_u32(in);
        Tensor& dst = const_cast<ad::Var&>(var).mutable_value();
        check_or<CorruptFile>(static_cast<int>(rank) == dst.rank(),
                              "checkpoint tensor rank mismatch at " + name);
        std::size_t count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            std::uint32_t dim = read_u32(in);
            check_or<CorruptFile>(static_cast<int>(dim) == dst.dim(static_cast<int>(d)),
                                  "checkpoint tensor shape mismatch at " + name);
            count *= dim;
        }
        in.read(reinterpret_cast<char*>(dst.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        check_or<CorruptFile>(in.good(), "checkpoint truncated at " + name);
    }
    return loaded;
}

}  // namespace imdp::checkpoint
