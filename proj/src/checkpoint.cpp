#include "speckg/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace speckg {

namespace {

constexpr char kMagic[8] = {'S', 'K', 'G', 'C', 'K', 'P', 'T', '\n'};

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file '" + path + "'");
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, meta.version);
    write_pod(out, meta.dim);
    write_pod(out, meta.entity_count);
    write_pod(out, meta.relation_count);
    write_pod(out, meta.seed);
    write_pod(out, meta.layers);
    write_pod(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
        write_pod(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<long>(name.size()));
        write_pod(out, static_cast<std::uint32_t>(tensor->shape.size()));
        for (std::size_t d : tensor->shape) write_pod(out, static_cast<std::uint64_t>(d));
        out.write(reinterpret_cast<const char*>(tensor->data.data()),
                  static_cast<long>(tensor->data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("load_checkpoint: '" + path + "' is not a checkpoint file");
    }
    Checkpoint ckpt;
    ckpt.meta.version = read_pod<std::uint32_t>(in, path);
    if (ckpt.meta.version != kCheckpointVersion) {
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(ckpt.meta.version));
    }
    ckpt.meta.dim = read_pod<std::uint64_t>(in, path);
    ckpt.meta.entity_count = read_pod<std::uint64_t>(in, path);
    ckpt.meta.relation_count = read_pod<std::uint64_t>(in, path);
    ckpt.meta.seed = read_pod<std::uint64_t>(in, path);
    ckpt.meta.layers = read_pod<std::uint64_t>(in, path);
    const auto count = read_pod<std::uint32_t>(in, path);
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = read_pod<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rank = read_pod<std::uint32_t>(in, path);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in, path));
        Tensor tensor(shape);
        in.read(reinterpret_cast<char*>(tensor.data.data()),
                static_cast<long>(tensor.data.size() * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
        ckpt.tensors.emplace(std::move(name), std::move(tensor));
    }
    return ckpt;
}

void save_model_checkpoint(const std::string& path, const ModelParams& params,
                           const std::vector<double>& entity_repr, std::uint64_t seed) {
    CheckpointMeta meta;
    meta.dim = params.dim;
    meta.entity_count = params.n_entities;
    meta.relation_count = params.n_relations;
    meta.seed = seed;
    meta.layers = params.layers;
    std::vector<std::pair<std::string, const Tensor*>> tensors = params.named();
    Tensor repr({params.n_entities, params.dim}, entity_repr);
    tensors.emplace_back("entity_repr", &repr);
    save_checkpoint(path, meta, tensors);
}

EncodedModel LoadedModel::view() const {
    EncodedModel m;
    m.params = &params;
    m.entity_repr = entity_repr.data;
    return m;
}

LoadedModel load_model_checkpoint(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    LoadedModel model;
    model.meta = ckpt.meta;
    model.params.dim = ckpt.meta.dim;
    model.params.n_entities = ckpt.meta.entity_count;
    model.params.n_relations = ckpt.meta.relation_count;
    model.params.layers = ckpt.meta.layers;
    auto take = [&](const std::string& name) -> Tensor {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) {
            throw std::runtime_error("load_model_checkpoint: '" + path + "' is missing tensor '" +
                                     name + "'");
        }
        return std::move(it->second);
    };
    for (auto& [name, tensor] : model.params.named()) *tensor = take(name);
    model.entity_repr = take("entity_repr");
    if (model.entity_repr.numel() != model.params.n_entities * model.params.dim) {
        throw std::runtime_error("load_model_checkpoint: entity_repr shape does not match header");
    }
    return model;
}

} // namespace speckg
