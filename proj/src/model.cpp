#include "chartgen/model.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace chartgen {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void ModelConfig::validate() const {
    if (d_model <= 0 || n_layers <= 0 || n_heads <= 0 || d_ff <= 0) {
        throw Error(Err::ShapeMismatch, "model dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
        throw Error(Err::ShapeMismatch, "d_model must be divisible by n_heads");
    }
    if (vocab_size < 2 || max_seq_len < 2) {
        throw Error(Err::ShapeMismatch, "vocab_size/max_seq_len too small");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
        throw Error(Err::ShapeMismatch, "dropout must be in [0, 1)");
    }
    if (conditioned) {
        if (n_q <= 0 || codebook_size <= 0 || max_cond_len <= 0) {
            throw Error(Err::ShapeMismatch, "conditioning dimensions must be positive");
        }
        if (adapter_kernel <= 0 || adapter_kernel % 2 == 0 || adapter_stride <= 0) {
            throw Error(Err::ShapeMismatch, "adapter kernel must be odd and stride positive");
        }
    }
}

std::vector<std::pair<std::string, std::string>> ModelConfig::to_kv() const {
    return {
        {"d_model", std::to_string(d_model)},
        {"n_layers", std::to_string(n_layers)},
        {"n_heads", std::to_string(n_heads)},
        {"d_ff", std::to_string(d_ff)},
        {"vocab_size", std::to_string(vocab_size)},
        {"max_seq_len", std::to_string(max_seq_len)},
        {"dropout", fmt_double(dropout_p)},
        {"conditioned", conditioned ? "1" : "0"},
        {"adapter_kernel", std::to_string(adapter_kernel)},
        {"adapter_stride", std::to_string(adapter_stride)},
        {"n_q", std::to_string(n_q)},
        {"codebook_size", std::to_string(codebook_size)},
        {"max_cond_len", std::to_string(max_cond_len)},
        {"seed", std::to_string(seed)},
    };
}

ModelConfig ModelConfig::from_kv(const std::vector<std::pair<std::string, std::string>>& kv) {
    ModelConfig cfg;
    for (const auto& [k, v] : kv) {
        try {
            if (k == "d_model") cfg.d_model = std::stoi(v);
            else if (k == "n_layers") cfg.n_layers = std::stoi(v);
            else if (k == "n_heads") cfg.n_heads = std::stoi(v);
            else if (k == "d_ff") cfg.d_ff = std::stoi(v);
            else if (k == "vocab_size") cfg.vocab_size = std::stoi(v);
            else if (k == "max_seq_len") cfg.max_seq_len = std::stoi(v);
            else if (k == "dropout") cfg.dropout_p = std::stod(v);
            else if (k == "conditioned") cfg.conditioned = (v != "0");
            else if (k == "adapter_kernel") cfg.adapter_kernel = std::stoi(v);
            else if (k == "adapter_stride") cfg.adapter_stride = std::stoi(v);
            else if (k == "n_q") cfg.n_q = std::stoi(v);
            else if (k == "codebook_size") cfg.codebook_size = std::stoi(v);
            else if (k == "max_cond_len") cfg.max_cond_len = std::stoi(v);
            else if (k == "seed") cfg.seed = std::stoull(v);
            // unknown keys are ignored for forward compatibility
        } catch (const std::exception&) {
            throw Error(Err::ShapeMismatch, "bad config value for " + k + ": " + v);
        }
    }
    cfg.validate();
    return cfg;
}

// ----------------------------- checkpoints -----------------------------

namespace {
constexpr char kCkptMagic[] = "A2CK 1";
}

void save_checkpoint(const ModelConfig& cfg, const ParamSetT<float>& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Err::IoError, "cannot open " + path + " for writing");

    out << kCkptMagic << "\n";
    for (const auto& [k, v] : cfg.to_kv()) out << k << " = " << v << "\n";

    size_t n_tensors = 0;
    params.for_each([&](const std::string&, const MatT<float>&) { ++n_tensors; });
    out << "tensors " << n_tensors << "\n";

    params.for_each([&](const std::string& name, const MatT<float>& m) {
        out << "tensor " << name << " " << m.rows << " " << m.cols << "\n";
        out.write(reinterpret_cast<const char*>(m.data.data()),
                  std::streamsize(m.data.size() * sizeof(float)));
    });
    if (!out) throw Error(Err::IoError, "write failed: " + path);
}

std::pair<ModelConfig, ParamSetT<float>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Err::IoError, "cannot open " + path);

    std::string line;
    if (!std::getline(in, line) || line != kCkptMagic) {
        throw Error(Err::BadMagic, "not a checkpoint file: " + path);
    }

    std::vector<std::pair<std::string, std::string>> kv;
    size_t n_tensors = 0;
    while (std::getline(in, line)) {
        if (line.rfind("tensors ", 0) == 0) {
            n_tensors = std::stoul(line.substr(8));
            break;
        }
        const size_t eq = line.find(" = ");
        if (eq == std::string::npos) throw Error(Err::CorruptHeader, "bad config line: " + line);
        kv.emplace_back(line.substr(0, eq), line.substr(eq + 3));
    }
    const ModelConfig cfg = ModelConfig::from_kv(kv);

    // allocate the right shapes, then overwrite tensor-by-tensor
    ParamSetT<float> params = init_params<float>(cfg);
    std::map<std::string, MatT<float>*> by_name;
    params.for_each([&](const std::string& name, MatT<float>& m) { by_name[name] = &m; });
    if (by_name.size() != n_tensors) {
        throw Error(Err::ShapeMismatch, "checkpoint tensor count does not match config");
    }

    for (size_t i = 0; i < n_tensors; ++i) {
        if (!std::getline(in, line)) throw Error(Err::CorruptHeader, "truncated checkpoint");
        std::istringstream hdr(line);
        std::string tag, name;
        int rows = 0, cols = 0;
        if (!(hdr >> tag >> name >> rows >> cols) || tag != "tensor") {
            throw Error(Err::CorruptHeader, "bad tensor header: " + line);
        }
        auto it = by_name.find(name);
        if (it == by_name.end()) throw Error(Err::ShapeMismatch, "unknown tensor " + name);
        MatT<float>& m = *it->second;
        if (m.rows != rows || m.cols != cols) {
            throw Error(Err::ShapeMismatch, "tensor " + name + " has unexpected shape");
        }
        in.read(reinterpret_cast<char*>(m.data.data()), std::streamsize(m.data.size() * sizeof(float)));
        if (!in) throw Error(Err::CorruptHeader, "truncated tensor data for " + name);
    }
    return {cfg, std::move(params)};
}

}  // namespace chartgen
