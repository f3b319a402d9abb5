#include "rflow/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "rflow/bytes.hpp"
#include "rflow/errors.hpp"

namespace rflow {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[5] = {'R', 'F', 'L', 'O', 'W'};

std::uint32_t stage_code(Stage s) { return static_cast<std::uint32_t>(s); }

Stage stage_from_code(std::uint32_t code) {
    if (code > 3) throw Error("bad stage code " + std::to_string(code));
    return static_cast<Stage>(code);
}

std::uint32_t activation_code(Activation a) { return static_cast<std::uint32_t>(a); }

Activation activation_from_code(std::uint32_t code) {
    if (code > 2) throw Error("bad activation code " + std::to_string(code));
    return static_cast<Activation>(code);
}

void write_params(std::ostream& out, const Tensor& t) {
    for (double v : t.data()) write_f64(out, v);
}

void read_params(std::istream& in, Tensor& t) {
    for (double& v : t.data_mut()) v = read_f64(in);
}

std::string encode_metadata(const std::map<std::string, std::string>& metadata) {
    std::string out;
    for (const auto& [key, value] : metadata) {
        if (key.find('=') != std::string::npos || key.find('\n') != std::string::npos ||
            value.find('\n') != std::string::npos) {
            throw ValueError("metadata keys/values must not contain '=' or newlines");
        }
        out += key;
        out += '=';
        out += value;
        out += '\n';
    }
    return out;
}

std::map<std::string, std::string> decode_metadata(const std::string& block) {
    std::map<std::string, std::string> out;
    std::istringstream in(block);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("malformed metadata line '" + line + "'");
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

}  // namespace

void save_checkpoint(const VelocityField& field, const std::filesystem::path& path) {
    field.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u32(out, kCheckpointVersion);
    write_u32(out, stage_code(field.stage));
    write_u32(out, static_cast<std::uint32_t>(field.dim));
    write_u32(out, static_cast<std::uint32_t>(field.cond_count()));
    write_u32(out, static_cast<std::uint32_t>(field.embed_width()));
    write_u32(out, static_cast<std::uint32_t>(field.time_embed_width));
    write_u32(out, activation_code(field.net.activation));
    write_u32(out, static_cast<std::uint32_t>(field.net.widths.size()));
    for (std::size_t w : field.net.widths) write_u32(out, static_cast<std::uint32_t>(w));
    write_block(out, encode_metadata(field.metadata));
    for (std::size_t l = 0; l < field.net.layer_count(); ++l) {
        write_params(out, field.net.weights[l]);
        write_params(out, field.net.biases[l]);
    }
    write_params(out, field.cond.table);
    write_params(out, field.cond.null_row);
    if (!out) throw Error("short write to '" + path.string() + "'");
}

VelocityField load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    char magic[5];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw Error("'" + path.string() + "' is not a checkpoint file");
    }
    std::uint32_t version = read_u32(in);
    if (version != kCheckpointVersion) {
        throw Error("unsupported checkpoint version " + std::to_string(version));
    }
    VelocityField field;
    field.stage = stage_from_code(read_u32(in));
    field.dim = read_u32(in);
    std::uint32_t cond_count = read_u32(in);
    std::uint32_t embed_width = read_u32(in);
    field.time_embed_width = read_u32(in);
    Activation act = activation_from_code(read_u32(in));
    std::uint32_t width_count = read_u32(in);
    if (width_count < 2) throw Error("checkpoint: malformed width list");
    std::vector<std::size_t> widths(width_count);
    for (auto& w : widths) w = read_u32(in);
    field.metadata = decode_metadata(read_block(in));

    field.net.widths = widths;
    field.net.activation = act;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Tensor w = Tensor::zeros({widths[l], widths[l + 1]});
        Tensor b = Tensor::zeros({widths[l + 1]});
        read_params(in, w);
        read_params(in, b);
        w.set_requires_grad(true);
        b.set_requires_grad(true);
        field.net.weights.push_back(w);
        field.net.biases.push_back(b);
    }
    field.cond.table = Tensor::zeros({cond_count, embed_width});
    field.cond.null_row = Tensor::zeros({embed_width});
    read_params(in, field.cond.table);
    read_params(in, field.cond.null_row);
    field.cond.table.set_requires_grad(true);
    field.cond.null_row.set_requires_grad(true);
    field.validate();
    return field;
}

}  // namespace rflow
