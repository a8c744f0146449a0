#include "splatfont/ply.hpp"

#include "splatfont/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace splatfont {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace {

constexpr const char* kFloatProps[] = {"x",       "y",       "z",       "f_dc_0",  "f_dc_1", "f_dc_2",
                                       "opacity", "scale_0", "scale_1", "scale_2", "rot_0",  "rot_1",
                                       "rot_2",   "rot_3"};

std::size_t type_size(const std::string& t) {
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},   {"uchar", 1},  {"int8", 1},  {"uint8", 1},   {"short", 2},   {"ushort", 2},
        {"int16", 2},  {"uint16", 2}, {"int", 4},   {"uint", 4},    {"int32", 4},   {"uint32", 4},
        {"float", 4},  {"float32", 4}, {"double", 8}, {"float64", 8}};
    auto it = sizes.find(t);
    if (it == sizes.end()) throw FormatError("unsupported PLY property type '" + t + "'");
    return it->second;
}

double read_scalar(const char* p, const std::string& t) {
    if (t == "float" || t == "float32") { float v; std::memcpy(&v, p, 4); return v; }
    if (t == "double" || t == "float64") { double v; std::memcpy(&v, p, 8); return v; }
    if (t == "int" || t == "int32") { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    if (t == "uint" || t == "uint32") { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    if (t == "short" || t == "int16") { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    if (t == "ushort" || t == "uint16") { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    if (t == "char" || t == "int8") { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    std::uint8_t v;
    std::memcpy(&v, p, 1);
    return v;
}

} // namespace

std::string encode_ply(const GaussianCloud& cloud) {
    std::ostringstream os;
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "comment num_components " << cloud.num_components << "\n";
    os << "element vertex " << cloud.size() << "\n";
    for (const char* name : kFloatProps) os << "property float " << name << "\n";
    os << "property int component_id\nend_header\n";
    std::string out = os.str();

    const std::size_t stride = 14 * sizeof(float) + sizeof(std::int32_t);
    const std::size_t header = out.size();
    out.resize(header + stride * cloud.size());
    char* p = out.data() + header;
    for (const auto& g : cloud.gaussians) {
        const float v[14] = {
            static_cast<float>(g.position.x()),  static_cast<float>(g.position.y()),
            static_cast<float>(g.position.z()),  static_cast<float>(g.color.x()),
            static_cast<float>(g.color.y()),     static_cast<float>(g.color.z()),
            static_cast<float>(g.opacity_logit), static_cast<float>(g.log_scale.x()),
            static_cast<float>(g.log_scale.y()), static_cast<float>(g.log_scale.z()),
            static_cast<float>(g.rotation[0]),   static_cast<float>(g.rotation[1]),
            static_cast<float>(g.rotation[2]),   static_cast<float>(g.rotation[3])};
        std::memcpy(p, v, sizeof(v));
        const std::int32_t c = g.component_id;
        std::memcpy(p + sizeof(v), &c, sizeof(c));
        p += stride;
    }
    return out;
}

void write_ply(const std::filesystem::path& path, const GaussianCloud& cloud) {
    const std::string bytes = encode_ply(cloud);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("failed writing '" + path.string() + "'");
}

GaussianCloud decode_ply(const std::string& bytes) {
    const std::string end_marker = "end_header\n";
    const auto end = bytes.find(end_marker);
    if (bytes.rfind("ply\n", 0) != 0 || end == std::string::npos) throw FormatError("not a PLY file");

    std::istringstream hs(bytes.substr(0, end));
    std::string line;
    std::size_t vertex_count = 0;
    bool in_vertex = false, seen_vertex = false;
    int num_components = -1;
    struct Prop { std::string name, type; std::size_t offset; };
    std::vector<Prop> props;
    std::size_t stride = 0;
    while (std::getline(hs, line)) {
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt != "binary_little_endian") throw FormatError("only binary_little_endian PLY is supported");
        } else if (kw == "comment") {
            std::string key;
            ls >> key;
            if (key == "num_components") ls >> num_components;
        } else if (kw == "element") {
            std::string name;
            std::size_t count = 0;
            ls >> name >> count;
            if (seen_vertex && !in_vertex) continue;
            if (in_vertex) throw FormatError("elements after 'vertex' are not supported");
            if (name != "vertex") throw FormatError("expected the vertex element first, got '" + name + "'");
            in_vertex = seen_vertex = true;
            vertex_count = count;
        } else if (kw == "property" && in_vertex) {
            std::string type, name;
            ls >> type;
            if (type == "list") throw FormatError("list properties are not supported on vertices");
            ls >> name;
            props.push_back({name, type, stride});
            stride += type_size(type);
        }
    }
    if (!seen_vertex) throw FormatError("PLY has no vertex element");

    auto find = [&](const std::string& name) -> const Prop* {
        auto it = std::find_if(props.begin(), props.end(), [&](const Prop& p) { return p.name == name; });
        return it == props.end() ? nullptr : &*it;
    };
    std::vector<const Prop*> cols;
    for (const char* name : kFloatProps) {
        const Prop* p = find(name);
        if (!p) throw FormatError(std::string("PLY is missing property '") + name + "'");
        cols.push_back(p);
    }
    const Prop* comp = find("component_id");

    const std::size_t body = end + end_marker.size();
    if (bytes.size() < body + stride * vertex_count) throw FormatError("PLY body is truncated");

    GaussianCloud cloud;
    cloud.gaussians.resize(vertex_count);
    int max_id = 0;
    for (std::size_t i = 0; i < vertex_count; ++i) {
        const char* row = bytes.data() + body + i * stride;
        double v[14];
        for (int k = 0; k < 14; ++k) v[k] = read_scalar(row + cols[k]->offset, cols[k]->type);
        auto& g = cloud.gaussians[i];
        g.position = Vec3(v[0], v[1], v[2]);
        g.color = Vec3(v[3], v[4], v[5]);
        g.opacity_logit = v[6];
        g.log_scale = Vec3(v[7], v[8], v[9]);
        g.rotation = Vec4(v[10], v[11], v[12], v[13]);
        g.component_id = comp ? static_cast<int>(read_scalar(row + comp->offset, comp->type)) : kUnassigned;
        max_id = std::max(max_id, g.component_id);
    }
    cloud.num_components = num_components > 0 ? std::max(num_components, max_id + 1) : max_id + 1;
    return cloud;
}

GaussianCloud read_ply(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_ply(ss.str());
}

} // namespace splatfont
