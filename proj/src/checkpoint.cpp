#include "rodenet/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace rodenet {

namespace {

constexpr char kMagic[4] = {'R', 'O', 'D', 'N'};
constexpr std::uint32_t kVersion = 1;

struct Entry {
    std::string name;
    std::vector<std::uint32_t> dims;
    const std::vector<double>* src = nullptr;  // save side
    bool learnable = true;
    std::size_t count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ofstream& out, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u8(std::ofstream& out, std::uint8_t v) {
    out.write(reinterpret_cast<const char*>(&v), 1);
}

std::uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t get_u16(std::ifstream& in) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint8_t get_u8(std::ifstream& in) {
    unsigned char b;
    in.read(reinterpret_cast<char*>(&b), 1);
    return b;
}

void collect_bn(std::vector<Entry>& entries, const std::string& prefix,
                const BatchNormParams<double>& bn) {
    const auto c = static_cast<std::uint32_t>(bn.gamma.size());
    entries.push_back({prefix + ".gamma", {c}, &bn.gamma, true});
    entries.push_back({prefix + ".beta", {c}, &bn.beta, true});
    entries.push_back({prefix + ".running_mean", {c}, &bn.running_mean, false});
    entries.push_back({prefix + ".running_var", {c}, &bn.running_var, false});
}

std::vector<Entry> manifest(const NetworkModel& m) {
    std::vector<Entry> entries;
    entries.push_back({"norm.mean", {static_cast<std::uint32_t>(m.norm.mean.size())},
                       &m.norm.mean, false});
    entries.push_back({"norm.std", {static_cast<std::uint32_t>(m.norm.stddev.size())},
                       &m.norm.stddev, false});
    entries.push_back({"stem.conv.w",
                       {static_cast<std::uint32_t>(m.stem.conv.out_ch),
                        static_cast<std::uint32_t>(m.stem.conv.in_ch), 3, 3},
                       &m.stem.conv.w, true});
    collect_bn(entries, "stem.bn", m.stem.bn);
    for (const auto& g : m.groups) {
        for (std::size_t bi = 0; bi < g.blocks.size(); ++bi) {
            const auto& b = g.blocks[bi];
            const std::string prefix = std::string(layer_name(g.id)) + ".b" + std::to_string(bi);
            entries.push_back({prefix + ".conv1.w",
                               {static_cast<std::uint32_t>(b.conv1.out_ch),
                                static_cast<std::uint32_t>(b.conv1.in_ch), 3, 3},
                               &b.conv1.w, true});
            collect_bn(entries, prefix + ".bn1", b.bn1);
            entries.push_back({prefix + ".conv2.w",
                               {static_cast<std::uint32_t>(b.conv2.out_ch),
                                static_cast<std::uint32_t>(b.conv2.in_ch), 3, 3},
                               &b.conv2.w, true});
            collect_bn(entries, prefix + ".bn2", b.bn2);
        }
    }
    entries.push_back({"head.fc.w",
                       {static_cast<std::uint32_t>(m.head.num_classes),
                        static_cast<std::uint32_t>(m.head.in_ch)},
                       &m.head.fc_w, true});
    entries.push_back({"head.fc.b", {static_cast<std::uint32_t>(m.head.num_classes)},
                       &m.head.fc_b, true});
    return entries;
}

}  // namespace

void save_checkpoint(const std::string& path, const NetworkModel& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(m.cfg.arch));
    put_u32(out, static_cast<std::uint32_t>(m.cfg.n));
    put_u32(out, static_cast<std::uint32_t>(m.cfg.num_classes));
    put_u32(out, static_cast<std::uint32_t>(m.cfg.base_ch));
    put_u32(out, static_cast<std::uint32_t>(m.cfg.input_hw));
    put_u32(out, static_cast<std::uint32_t>(m.cfg.input_ch));
    put_u8(out, static_cast<std::uint8_t>(m.cfg.method));
    put_u8(out, static_cast<std::uint8_t>(m.cfg.steps_mode));
    put_u32(out, static_cast<std::uint32_t>(m.cfg.explicit_steps));
    put_u8(out, static_cast<std::uint8_t>(m.cfg.bn_mode));

    const std::vector<Entry> entries = manifest(m);
    put_u32(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u8(out, 0);  // dtype f32
        put_u8(out, static_cast<std::uint8_t>(e.dims.size()));
        for (auto d : e.dims) put_u32(out, d);
    }
    for (const auto& e : entries) {
        if (e.src->size() != e.count()) {
            throw std::logic_error("save_checkpoint: manifest shape mismatch for " + e.name);
        }
        for (double v : *e.src) {
            const float f = static_cast<float>(v);
            static_assert(sizeof(float) == 4);
            out.write(reinterpret_cast<const char*>(&f), 4);
        }
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

NetworkModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("load_checkpoint: " + path + " is not a RODN checkpoint");
    }
    const std::uint32_t version = get_u32(in);
    if (version != kVersion) {
        throw std::runtime_error("load_checkpoint: unsupported format version " +
                                 std::to_string(version));
    }
    NetworkConfig cfg;
    cfg.arch = static_cast<Arch>(get_u32(in));
    cfg.n = static_cast<int>(get_u32(in));
    cfg.num_classes = static_cast<int>(get_u32(in));
    cfg.base_ch = static_cast<int>(get_u32(in));
    cfg.input_hw = static_cast<int>(get_u32(in));
    cfg.input_ch = static_cast<int>(get_u32(in));
    cfg.method = static_cast<SolverMethod>(get_u8(in));
    cfg.steps_mode = static_cast<StepsMode>(get_u8(in));
    cfg.explicit_steps = static_cast<int>(get_u32(in));
    cfg.bn_mode = static_cast<BnMode>(get_u8(in));

    NetworkModel m = build_network(cfg, 0);

    struct Loaded {
        std::vector<std::uint32_t> dims;
        std::size_t count;
    };
    const std::uint32_t tensor_count = get_u32(in);
    std::vector<std::pair<std::string, Loaded>> order;
    for (std::uint32_t i = 0; i < tensor_count; ++i) {
        const std::uint16_t len = get_u16(in);
        std::string name(len, '\0');
        in.read(name.data(), len);
        const std::uint8_t dtype = get_u8(in);
        if (dtype != 0) throw std::runtime_error("load_checkpoint: unsupported dtype for " + name);
        const std::uint8_t ndim = get_u8(in);
        Loaded l;
        l.count = 1;
        for (int d = 0; d < ndim; ++d) {
            l.dims.push_back(get_u32(in));
            l.count *= l.dims.back();
        }
        order.emplace_back(std::move(name), std::move(l));
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated manifest in " + path);

    // Destination map from the freshly built model.
    std::vector<Entry> entries = manifest(m);
    std::map<std::string, Entry*> by_name;
    for (auto& e : entries) by_name[e.name] = &e;

    std::uint64_t learnable_bytes = 0;
    for (auto& [name, loaded] : order) {
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw std::runtime_error("load_checkpoint: unexpected tensor " + name + " for " +
                                     arch_name(cfg.arch) + "-" + std::to_string(cfg.n));
        }
        Entry* dst = it->second;
        if (dst->count() != loaded.count) {
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
        }
        auto* vec = const_cast<std::vector<double>*>(dst->src);
        for (std::size_t i = 0; i < loaded.count; ++i) {
            float f;
            in.read(reinterpret_cast<char*>(&f), 4);
            (*vec)[i] = static_cast<double>(f);
        }
        if (dst->learnable) learnable_bytes += 4ull * loaded.count;
        by_name.erase(it);
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated payload in " + path);
    if (!by_name.empty()) {
        throw std::runtime_error("load_checkpoint: missing tensor " + by_name.begin()->first);
    }
    if (cfg.base_ch == 16 && cfg.num_classes == 100 && cfg.input_ch == 3) {
        const std::uint64_t expected = param_size_total(cfg.arch, cfg.n);
        if (learnable_bytes != expected) {
            throw std::runtime_error("load_checkpoint: learnable payload is " +
                                     std::to_string(learnable_bytes) + " bytes, expected " +
                                     std::to_string(expected));
        }
    }
    return m;
}

}  // namespace rodenet
