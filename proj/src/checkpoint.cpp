#include "qprl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace qprl::io {

namespace {

constexpr char kMagic[8] = {'Q', 'P', 'R', 'L', 'C', 'K', 'P', 'T'};

uint64_t fnv1a(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

template <typename T>
void put(std::string& out, const T& v) {
    static_assert(std::is_trivially_copyable_v<T>);
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::string& out, const std::string& s) {
    put(out, static_cast<uint32_t>(s.size()));
    out.append(s);
}

struct Reader {
    const std::string& buf;
    size_t pos = 0;

    template <typename T>
    T get() {
        if (pos + sizeof(T) > buf.size())
            throw std::runtime_error("checkpoint: truncated (checksum region unreachable)");
        T v;
        std::memcpy(&v, buf.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }

    std::string get_str() {
        uint32_t n = get<uint32_t>();
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated string");
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

std::string shape_to_text(const rl::NetShape& s) {
    std::ostringstream os;
    os.precision(17);
    os << "mb_rows = " << s.mb_rows << "\nmb_cols = " << s.mb_cols
       << "\nact_rows = " << s.act_rows << "\nact_cols = " << s.act_cols
       << "\nplanes = " << s.planes << "\nglobals = " << s.globals
       << "\nchannels = " << s.channels << "\nlatent = " << s.latent
       << "\ninit_log_std = " << s.init_log_std << "\n";
    return os.str();
}

rl::NetShape shape_from_text(const std::string& text) {
    rl::NetShape s;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string key, eq;
        ls >> key >> eq;
        if (eq != "=") continue;
        if (key == "mb_rows") ls >> s.mb_rows;
        else if (key == "mb_cols") ls >> s.mb_cols;
        else if (key == "act_rows") ls >> s.act_rows;
        else if (key == "act_cols") ls >> s.act_cols;
        else if (key == "planes") ls >> s.planes;
        else if (key == "globals") ls >> s.globals;
        else if (key == "channels") ls >> s.channels;
        else if (key == "latent") ls >> s.latent;
        else if (key == "init_log_std") ls >> s.init_log_std;
    }
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const rl::PolicyNet& net,
                     const rl::TrainConfig& cfg) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    put(buf, kCheckpointVersion);
    put_str(buf, shape_to_text(net.shape()));
    put_str(buf, rl::train_config_to_text(cfg));
    put(buf, static_cast<uint32_t>(net.tensors().size()));
    for (const auto& t : net.tensors()) {
        put_str(buf, t.name);
        put(buf, static_cast<uint32_t>(t.dims.size()));
        for (int d : t.dims) put(buf, static_cast<uint64_t>(d));
        put(buf, static_cast<uint64_t>(t.count));
        buf.append(reinterpret_cast<const char*>(net.params().data() + t.offset),
                   t.count * sizeof(double));
    }
    put(buf, fnv1a(buf));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("save_checkpoint: short write to " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();

    if (buf.size() < sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t) ||
        std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("load_checkpoint: not a checkpoint file: " + path);

    // checksum first so no partial state is ever exposed
    uint64_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - sizeof(uint64_t), sizeof(uint64_t));
    std::string payload = buf.substr(0, buf.size() - sizeof(uint64_t));
    if (fnv1a(payload) != stored)
        throw std::runtime_error("load_checkpoint: checksum mismatch (corrupt or truncated): " +
                                 path);

    Reader r{payload, sizeof(kMagic)};
    uint32_t version = r.get<uint32_t>();
    if (version != kCheckpointVersion)
        throw std::runtime_error("load_checkpoint: version " + std::to_string(version) +
                                 " unsupported, this build reads version " +
                                 std::to_string(kCheckpointVersion));
    rl::NetShape shape = shape_from_text(r.get_str());
    rl::TrainConfig cfg = rl::train_config_from_text(r.get_str());

    rl::PolicyNet net(shape, 0);
    uint32_t n_tensors = r.get<uint32_t>();
    if (n_tensors != net.tensors().size())
        throw std::runtime_error("load_checkpoint: tensor count mismatch");
    for (uint32_t i = 0; i < n_tensors; ++i) {
        std::string name = r.get_str();
        uint32_t ndim = r.get<uint32_t>();
        std::vector<int> dims(ndim);
        for (auto& d : dims) d = static_cast<int>(r.get<uint64_t>());
        uint64_t count = r.get<uint64_t>();
        auto dst = net.tensor_data(name);
        if (dst.size() != count)
            throw std::runtime_error("load_checkpoint: tensor " + name + " holds " +
                                     std::to_string(count) + " values, expected " +
                                     std::to_string(dst.size()));
        if (r.pos + count * sizeof(double) > payload.size())
            throw std::runtime_error("load_checkpoint: truncated tensor " + name);
        std::memcpy(dst.data(), payload.data() + r.pos, count * sizeof(double));
        r.pos += count * sizeof(double);
    }
    return LoadedCheckpoint{std::move(net), cfg};
}

}  // namespace qprl::io
