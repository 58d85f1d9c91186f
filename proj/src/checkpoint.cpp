#include "dimba/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace dimba {

static const char kMagic[4] = {'D', 'M', 'B', 'A'};
static const std::uint32_t kVersion = 1;

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

static std::string config_text(const ModelConfig& c, const CheckpointMeta& m) {
    std::ostringstream os;
    os << "n_blocks=" << c.n_blocks << "\nhidden=" << c.hidden << "\nratio_k=" << c.ratio_k
       << "\npatch=" << c.patch << "\nin_channels=" << c.in_channels
       << "\nbase_resolution=" << c.base_resolution << "\nd_text=" << c.d_text
       << "\nmax_text_tokens=" << c.max_text_tokens << "\nmlp_ratio=" << c.mlp_ratio
       << "\nn_heads=" << c.n_heads << "\nssm_state=" << c.ssm_state
       << "\nssm_expansion=" << c.ssm_expansion << "\nconv_width=" << c.conv_width
       << "\ntime_freq_dim=" << c.time_freq_dim << "\nlearned_pe=" << (c.learned_pe ? 1 : 0)
       << "\nstep=" << m.step << "\nstage=" << m.stage << "\neval_score="
       << std::hexfloat << m.eval_score << std::defaultfloat << "\n";
    return os.str();
}

static void parse_config_text(const std::string& text, ModelConfig& c, CheckpointMeta& m) {
    std::istringstream is(text);
    std::string line;
    std::map<std::string, std::string> kv;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto geti = [&](const std::string& k) { return std::stoi(kv.at(k)); };
    c.n_blocks = geti("n_blocks");
    c.hidden = geti("hidden");
    c.ratio_k = geti("ratio_k");
    c.patch = geti("patch");
    c.in_channels = geti("in_channels");
    c.base_resolution = geti("base_resolution");
    c.d_text = geti("d_text");
    c.max_text_tokens = geti("max_text_tokens");
    c.mlp_ratio = geti("mlp_ratio");
    c.n_heads = geti("n_heads");
    c.ssm_state = geti("ssm_state");
    c.ssm_expansion = geti("ssm_expansion");
    c.conv_width = geti("conv_width");
    c.time_freq_dim = geti("time_freq_dim");
    c.learned_pe = geti("learned_pe") != 0;
    m.step = std::stoll(kv.at("step"));
    m.stage = kv.at("stage");
    m.eval_score = std::strtod(kv.at("eval_score").c_str(), nullptr);
}

template <typename T>
static void write_pod(std::ostream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
static T read_pod(std::istream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f.write(kMagic, 4);
    write_pod<std::uint32_t>(f, kVersion);
    std::string cfg = config_text(ckpt.config, ckpt.meta);
    write_pod<std::uint64_t>(f, cfg.size());
    f.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    write_pod<std::uint64_t>(f, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint8_t>(f, 0);  // dtype tag: 0 = float64
        write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(t.ndim()));
        for (int d = 0; d < t.ndim(); ++d) write_pod<std::int64_t>(f, t.dim(d));
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    auto version = read_pod<std::uint32_t>(f);
    if (version != kVersion) throw std::runtime_error("load_checkpoint: unsupported version");
    auto cfg_len = read_pod<std::uint64_t>(f);
    std::string cfg(cfg_len, '\0');
    f.read(cfg.data(), static_cast<std::streamsize>(cfg_len));
    Checkpoint ckpt;
    parse_config_text(cfg, ckpt.config, ckpt.meta);
    auto n = read_pod<std::uint64_t>(f);
    for (std::uint64_t i = 0; i < n; ++i) {
        auto name_len = read_pod<std::uint32_t>(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        auto dtype = read_pod<std::uint8_t>(f);
        if (dtype != 0) throw std::runtime_error("load_checkpoint: unknown dtype for " + name);
        auto ndim = read_pod<std::uint32_t>(f);
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = static_cast<int>(read_pod<std::int64_t>(f));
        Tensor t(shape);
        f.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
        if (!f) throw std::runtime_error("load_checkpoint: truncated tensor " + name);
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

Checkpoint checkpoint_from_model(const Model& m, CheckpointMeta meta) {
    Checkpoint ckpt;
    ckpt.config = m.cfg;
    ckpt.meta = std::move(meta);
    for (const auto& p : m.params()) ckpt.tensors.emplace_back(p->name, p->value);
    return ckpt;
}

Model model_from_checkpoint(const Checkpoint& ckpt) {
    Model m = build_model(ckpt.config, 0);
    for (auto& p : m.params()) {
        const Tensor* t = ckpt.find(p->name);
        if (!t) throw std::runtime_error("checkpoint missing tensor: " + p->name);
        if (!t->same_shape(p->value))
            throw std::runtime_error("checkpoint shape mismatch for tensor: " + p->name + " (" +
                                     t->shape_str() + " vs " + p->value.shape_str() + ")");
        p->value = *t;
    }
    return m;
}

}  // namespace dimba
