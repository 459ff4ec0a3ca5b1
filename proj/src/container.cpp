#include "flowmoe/container.hpp"

#include "flowmoe/binary_io.hpp"
#include "flowmoe/error.hpp"

#include <fstream>
#include <map>
#include <sstream>

namespace flowmoe {

namespace {

void put_section(std::ostream& out, const char (&tag)[5], const std::string& payload) {
    binary::put_tag(out, tag);
    binary::put_u64(out, payload.size());
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

}  // namespace

void write_container(std::ostream& out, const ModelContainer& c) {
    c.experts.validate();
    std::ostringstream norm;
    write_norm_stats(norm, c.experts.norm);
    binary::put_tag(out, "FMOE");
    binary::put_u32(out, kContainerVersion);
    binary::put_u32(out, c.gate ? 5 : 4);
    put_section(out, "NORM", norm.str());
    put_section(out, "AVGX", nn::serialize_model(c.experts.avg_expert));
    put_section(out, "DEGX", nn::serialize_model(c.experts.deg_expert));
    if (c.gate) {
        std::ostringstream g;
        binary::put_u32(g, c.gate->use_readout ? 1 : 0);
        nn::write_model(g, c.gate->mlp);
        put_section(out, "GATE", g.str());
    }
    put_section(out, "CONF", c.config_text);
    if (!out) throw IoError("failed writing model container");
}

ModelContainer read_container(std::istream& in) {
    if (binary::get_tag(in) != "FMOE") throw FormatError("not a model container (bad magic)");
    const auto version = binary::get_u32(in);
    if (version != kContainerVersion)
        throw FormatError("unsupported container version " + std::to_string(version) + " (expected " +
                          std::to_string(kContainerVersion) + ")");
    const auto count = binary::get_u32(in);
    if (count > 64) throw FormatError("implausible section count");
    std::map<std::string, std::string> sections;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string tag = binary::get_tag(in);
        const auto size = binary::get_u64(in);
        if (size > (std::uint64_t{1} << 34)) throw FormatError("implausible section size");
        std::string payload(size, '\0');
        if (size && !in.read(payload.data(), static_cast<std::streamsize>(size)))
            throw FormatError("truncated section " + tag);
        if (!sections.emplace(tag, std::move(payload)).second) throw FormatError("duplicate section " + tag);
    }
    auto need = [&](const std::string& tag) -> const std::string& {
        auto it = sections.find(tag);
        if (it == sections.end()) throw FormatError("container lacks section " + tag);
        return it->second;
    };
    ModelContainer c;
    {
        std::istringstream s(need("NORM"));
        c.experts.norm = read_norm_stats(s);
    }
    c.experts.avg_expert = nn::deserialize_model(need("AVGX"));
    c.experts.deg_expert = nn::deserialize_model(need("DEGX"));
    c.experts.validate();
    if (auto it = sections.find("GATE"); it != sections.end()) {
        std::istringstream s(it->second);
        GateModel g;
        g.use_readout = binary::get_u32(s) != 0;
        g.mlp = nn::read_model(s);
        if (g.mlp.input_dim() != gate_input_dim(c.experts.feature_dim(), g.use_readout))
            throw FormatError("gate input width does not match the experts");
        c.gate = std::move(g);
    }
    if (auto it = sections.find("CONF"); it != sections.end()) c.config_text = it->second;
    return c;
}

std::string serialize_container(const ModelContainer& c) {
    std::ostringstream out;
    write_container(out, c);
    return out.str();
}

ModelContainer deserialize_container(const std::string& bytes) {
    std::istringstream in(bytes);
    return read_container(in);
}

void save_container(const std::filesystem::path& path, const ModelContainer& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    write_container(out, c);
}

ModelContainer load_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    return read_container(in);
}

}  // namespace flowmoe
