#include "longred/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "longred/digest.hpp"
#include "longred/errors.hpp"

namespace longred {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::uint64_t parse_hex64(std::string_view s) {
    std::uint64_t v = 0;
    if (s.empty() || s.size() > 16) throw IoError("bad hex64 digest");
    for (const char c : s) {
        v <<= 4;
        if (c >= '0' && c <= '9')
            v |= static_cast<std::uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f')
            v |= static_cast<std::uint64_t>(c - 'a' + 10);
        else
            throw IoError("bad hex64 digest");
    }
    return v;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

void write_config_lines(std::ostream& os, const ModelConfig& c) {
    os << "model.layers=" << c.layers << "\n"
       << "model.heads=" << c.heads << "\n"
       << "model.d_model=" << c.d_model << "\n"
       << "model.head_dim=" << c.head_dim << "\n"
       << "model.vocab=" << c.vocab << "\n"
       << "model.window=" << c.window << "\n"
       << "model.rope_base=" << fmt_double(c.rope_base) << "\n"
       << "model.pi_scale=" << fmt_double(c.pi_scale) << "\n"
       << "model.ffn_mult=" << c.ffn_mult << "\n";
}

struct Header {
    int version = 0;
    std::string dtype;
    ModelConfig config;
    struct Entry {
        std::string name;
        std::vector<std::size_t> shape;
        std::size_t offset = 0;  // bytes from payload start
        std::size_t count = 0;   // elements
    };
    std::vector<Entry> tensors;
    std::uint64_t payload_digest = 0;
    std::size_t header_bytes = 0;  // payload starts here
};

Header read_header(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointMagic)
        throw IoError("bad checkpoint magic: " + path.string());

    Header h;
    std::map<std::string, std::string> kv;
    bool ended = false;
    while (std::getline(in, line)) {
        if (line == "end") {
            ended = true;
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("bad checkpoint header line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "tensor") {
            std::istringstream ss(val);
            Header::Entry e;
            std::size_t ndim = 0;
            ss >> e.name >> ndim;
            e.shape.resize(ndim);
            for (auto& d : e.shape) ss >> d;
            ss >> e.offset >> e.count;
            if (!ss) throw IoError("bad tensor directory line: " + line);
            h.tensors.push_back(std::move(e));
        } else {
            kv[key] = val;
        }
    }
    if (!ended) throw IoError("checkpoint header missing end marker: " + path.string());
    h.header_bytes = static_cast<std::size_t>(in.tellg());

    for (const char* key :
         {"version", "dtype", "model.layers", "model.heads", "model.d_model", "model.head_dim",
          "model.vocab", "model.window", "model.rope_base", "model.pi_scale", "model.ffn_mult",
          "payload_digest"})
        if (!kv.count(key)) throw IoError(std::string("checkpoint header missing key: ") + key);

    h.version = std::stoi(kv["version"]);
    if (h.version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version: " + kv["version"]);
    h.dtype = kv["dtype"];
    h.config.layers = std::stoi(kv["model.layers"]);
    h.config.heads = std::stoi(kv["model.heads"]);
    h.config.d_model = std::stoi(kv["model.d_model"]);
    h.config.head_dim = std::stoi(kv["model.head_dim"]);
    h.config.vocab = std::stoi(kv["model.vocab"]);
    h.config.window = std::stoi(kv["model.window"]);
    h.config.rope_base = std::stod(kv["model.rope_base"]);
    h.config.pi_scale = std::stod(kv["model.pi_scale"]);
    h.config.ffn_mult = std::stoi(kv["model.ffn_mult"]);
    h.payload_digest = parse_hex64(kv["payload_digest"]);
    return h;
}

}  // namespace

template <typename T>
std::uint64_t parameter_digest(const DecoderModel<T>& model) {
    Fnv1a64 h;
    for (const auto& [name, t] : model.parameters())
        h.update(t.data(), t.size() * sizeof(T));
    return h.value();
}

template <typename T>
std::uint64_t save_checkpoint(const DecoderModel<T>& model, const std::filesystem::path& path) {
    const std::uint64_t digest = parameter_digest(model);

    std::ostringstream header;
    header << kCheckpointMagic << "\n";
    header << "version=" << kCheckpointVersion << "\n";
    header << "dtype=" << dtype_name<T>() << "\n";
    write_config_lines(header, model.config());
    std::size_t offset = 0;
    for (const auto& [name, t] : model.parameters()) {
        header << "tensor=" << name << " " << t.shape().size();
        for (const auto d : t.shape()) header << " " << d;
        header << " " << offset << " " << t.size() << "\n";
        offset += t.size() * sizeof(T);
    }
    header << "payload_digest=" << hex64(digest) << "\n";
    header << "end\n";

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path.string());
    const std::string h = header.str();
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, t] : model.parameters())
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!out) throw IoError("short write: " + path.string());
    return digest;
}

template <typename T>
DecoderModel<T> load_checkpoint(const std::filesystem::path& path) {
    const Header h = read_header(path);
    if (h.dtype != dtype_name<T>())
        throw IoError("checkpoint dtype is " + h.dtype + ", expected " +
                      std::string(dtype_name<T>()));

    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    in.seekg(static_cast<std::streamoff>(h.header_bytes));

    std::vector<std::pair<std::string, Tensor<T>>> params;
    Fnv1a64 digest;
    for (const auto& e : h.tensors) {
        std::vector<T> data(e.count);
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(e.count * sizeof(T)));
        if (in.gcount() != static_cast<std::streamsize>(e.count * sizeof(T)))
            throw IoError("checkpoint payload truncated: " + path.string());
        digest.update(data.data(), data.size() * sizeof(T));
        params.emplace_back(e.name, Tensor<T>::from(e.shape, std::move(data)));
    }
    if (digest.value() != h.payload_digest)
        throw IoError("checkpoint payload digest mismatch: " + path.string());
    return DecoderModel<T>(h.config, std::move(params));
}

std::string checkpoint_dtype(const std::filesystem::path& path) {
    return read_header(path).dtype;
}

ModelConfig checkpoint_config(const std::filesystem::path& path) {
    return read_header(path).config;
}

std::uint64_t file_digest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    Fnv1a64 h;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h.update(buf, static_cast<std::size_t>(in.gcount()));
    return h.value();
}

template std::uint64_t save_checkpoint<float>(const DecoderModel<float>&,
                                              const std::filesystem::path&);
template std::uint64_t save_checkpoint<double>(const DecoderModel<double>&,
                                               const std::filesystem::path&);
template DecoderModel<float> load_checkpoint<float>(const std::filesystem::path&);
template DecoderModel<double> load_checkpoint<double>(const std::filesystem::path&);
template std::uint64_t parameter_digest<float>(const DecoderModel<float>&);
template std::uint64_t parameter_digest<double>(const DecoderModel<double>&);

}  // namespace longred
