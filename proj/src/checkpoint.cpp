#include "dolfin/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "dolfin/errors.hpp"

namespace dolfin {

namespace {

constexpr char kMagic[4] = {'D', 'O', 'L', 'F'};
constexpr unsigned char kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_tensor(std::string& out, const std::string& name, const DenseMatrix& m) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) put_f64(out, m(i, j));
}

DenseMatrix scalar(double v) {
    DenseMatrix m(1, 1);
    m(0, 0) = v;
    return m;
}

struct Reader {
    const std::string& bytes;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > bytes.size()) {
            throw FormatError(std::string("checkpoint truncated reading ") + what,
                              static_cast<long long>(pos));
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + (std::size_t)i]))
                 << (8 * i);
        pos += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + (std::size_t)i]))
                    << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::pair<std::string, DenseMatrix> tensor() {
        std::uint32_t name_len = u32("tensor name length");
        need(name_len, "tensor name");
        std::string name = bytes.substr(pos, name_len);
        pos += name_len;
        std::uint32_t rows = u32("tensor rows");
        std::uint32_t cols = u32("tensor cols");
        if (rows > (1u << 24) || cols > (1u << 24)) {
            throw FormatError("checkpoint tensor dimensions implausible for \"" + name + "\"",
                              static_cast<long long>(pos) - 8);
        }
        DenseMatrix m(static_cast<int>(rows), static_cast<int>(cols));
        for (std::uint32_t i = 0; i < rows; ++i)
            for (std::uint32_t j = 0; j < cols; ++j)
                m(static_cast<int>(i), static_cast<int>(j)) = f64("tensor data");
        return {std::move(name), std::move(m)};
    }
};

double checksum_as_double(std::uint64_t checksum) {
    double v;
    std::memcpy(&v, &checksum, 8);
    return v;
}

}  // namespace

std::string encode_checkpoint(const ModelState& model,
                              const std::vector<std::array<SubspaceMemory, 2>>& memories) {
    std::string out;
    out.append(kMagic, 4);
    out.push_back(static_cast<char>(kVersion));

    std::vector<std::pair<std::string, DenseMatrix>> tensors;
    tensors.emplace_back("meta/backbone_checksum", scalar(checksum_as_double(
                                                       backbone_checksum(*model.backbone))));
    tensors.emplace_back("meta/task_index", scalar(static_cast<double>(model.task_index)));
    tensors.emplace_back("meta/has_adapters", scalar(model.has_adapters ? 1.0 : 0.0));
    {
        DenseMatrix cpt(1, static_cast<int>(model.classes_per_task.size()));
        for (std::size_t i = 0; i < model.classes_per_task.size(); ++i)
            cpt(0, static_cast<int>(i)) = static_cast<double>(model.classes_per_task[i]);
        tensors.emplace_back("meta/classes_per_task", std::move(cpt));
    }
    tensors.emplace_back("head", model.head);
    for (std::size_t l = 0; l < model.merged_delta_k.size(); ++l) {
        std::string prefix = "layer" + std::to_string(l) + "/";
        tensors.emplace_back(prefix + "delta_k", model.merged_delta_k[l]);
        tensors.emplace_back(prefix + "delta_v", model.merged_delta_v[l]);
        if (model.has_adapters) {
            tensors.emplace_back(prefix + "a_k", model.adapters[l].key.a);
            tensors.emplace_back(prefix + "b_k", model.adapters[l].key.b);
            tensors.emplace_back(prefix + "a_v", model.adapters[l].value.a);
            tensors.emplace_back(prefix + "b_v", model.adapters[l].value.b);
        }
    }
    tensors.emplace_back("meta/memory_layers", scalar(static_cast<double>(memories.size())));
    for (std::size_t l = 0; l < memories.size(); ++l) {
        for (int pr = 0; pr < 2; ++pr) {
            const SubspaceMemory& mem = memories[l][static_cast<std::size_t>(pr)];
            std::string prefix = "memory" + std::to_string(l) + "/" +
                                 (pr == 0 ? "key" : "value") + "/";
            tensors.emplace_back(prefix + "side",
                                 scalar(mem.stored_side == StoredSide::GradientSpace ? 0.0 : 1.0));
            tensors.emplace_back(prefix + "ambient", scalar(static_cast<double>(mem.ambient_dim)));
            tensors.emplace_back(prefix + "dim", scalar(static_cast<double>(mem.memory_dim)));
            tensors.emplace_back(prefix + "saturated", scalar(mem.saturated ? 1.0 : 0.0));
            tensors.emplace_back(prefix + "basis", mem.basis);
        }
    }

    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) put_tensor(out, name, m);
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes,
                             std::shared_ptr<const Backbone> backbone) {
    Reader r{bytes};
    r.need(4, "magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("checkpoint has bad magic", 0);
    }
    r.pos = 4;
    r.need(1, "version");
    unsigned char version = static_cast<unsigned char>(bytes[r.pos]);
    if (version != kVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " unsupported (want " +
                              std::to_string(kVersion) + ")",
                          static_cast<long long>(r.pos));
    }
    r.pos += 1;
    std::uint32_t count = r.u32("tensor count");
    std::vector<std::pair<std::string, DenseMatrix>> tensors;
    for (std::uint32_t i = 0; i < count; ++i) tensors.push_back(r.tensor());
    if (r.pos != bytes.size()) {
        throw FormatError("checkpoint has trailing bytes", static_cast<long long>(r.pos));
    }

    auto find = [&](const std::string& name) -> const DenseMatrix& {
        for (const auto& [n, m] : tensors)
            if (n == name) return m;
        throw FormatError("checkpoint is missing tensor \"" + name + "\"", 0);
    };

    Checkpoint ck;
    ck.model = make_model(backbone);
    if (find("meta/backbone_checksum")(0, 0) !=
        checksum_as_double(backbone_checksum(*backbone))) {
        throw FormatError("checkpoint was saved against a different backbone", 0);
    }
    ck.model.task_index = static_cast<int>(find("meta/task_index")(0, 0));
    ck.model.has_adapters = find("meta/has_adapters")(0, 0) != 0.0;
    {
        const DenseMatrix& cpt = find("meta/classes_per_task");
        ck.model.classes_per_task.clear();
        for (int j = 0; j < cpt.cols(); ++j)
            ck.model.classes_per_task.push_back(static_cast<int>(cpt(0, j)));
    }
    ck.model.head = find("head");
    ck.model.merged_delta_k.clear();
    ck.model.merged_delta_v.clear();
    ck.model.adapters.clear();
    for (std::size_t l = 0; l < backbone->layers.size(); ++l) {
        std::string prefix = "layer" + std::to_string(l) + "/";
        ck.model.merged_delta_k.push_back(find(prefix + "delta_k"));
        ck.model.merged_delta_v.push_back(find(prefix + "delta_v"));
        if (ck.model.has_adapters) {
            LayerAdapters ad;
            ad.key.a = find(prefix + "a_k");
            ad.key.b = find(prefix + "b_k");
            ad.value.a = find(prefix + "a_v");
            ad.value.b = find(prefix + "b_v");
            ck.model.adapters.push_back(std::move(ad));
        }
    }
    int mem_layers = static_cast<int>(find("meta/memory_layers")(0, 0));
    for (int l = 0; l < mem_layers; ++l) {
        std::array<SubspaceMemory, 2> pair;
        for (int pr = 0; pr < 2; ++pr) {
            std::string prefix =
                "memory" + std::to_string(l) + "/" + (pr == 0 ? "key" : "value") + "/";
            SubspaceMemory& mem = pair[static_cast<std::size_t>(pr)];
            mem.stored_side = find(prefix + "side")(0, 0) == 0.0 ? StoredSide::GradientSpace
                                                                 : StoredSide::Complement;
            mem.ambient_dim = static_cast<int>(find(prefix + "ambient")(0, 0));
            mem.memory_dim = static_cast<int>(find(prefix + "dim")(0, 0));
            mem.saturated = find(prefix + "saturated")(0, 0) != 0.0;
            mem.basis = find(prefix + "basis");
        }
        ck.memories.push_back(std::move(pair));
    }
    return ck;
}

void save_checkpoint(const ModelState& model,
                     const std::vector<std::array<SubspaceMemory, 2>>& memories,
                     const std::string& path) {
    std::string bytes = encode_checkpoint(model, memories);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open checkpoint for writing: " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::shared_ptr<const Backbone> backbone) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, std::move(backbone));
}

}  // namespace dolfin
