#include "microast/weights_io.hpp"

#include "microast/error.hpp"

#include <json.hpp>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace microast {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'M', 'A', 'S', 'T'};
constexpr const char* kDtype = "f32";

std::size_t align_up(std::size_t v) { return (v + kMastAlignment - 1) / kMastAlignment * kMastAlignment; }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        crc = crc32(crc, bytes.data() + pos, chunk);
        pos += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

json plan_to_json(const ChannelPlan& plan) {
    return json{{"bottleneck", plan.bottleneck},
                {"kernel", plan.kernel},
                {"mid", plan.mid},
                {"modulated_convs", plan.modulated_convs},
                {"stem", plan.stem}};
}

ChannelPlan plan_from_json(const json& j) {
    if (!j.is_object()) throw IntegrityError("mast: plan is not a JSON object");
    static const char* keys[] = {"bottleneck", "kernel", "mid", "modulated_convs", "stem"};
    if (j.size() != std::size(keys)) throw SchemaError("mast: plan has unexpected fields");
    for (const char* k : keys) {
        if (!j.contains(k) || !j[k].is_number_unsigned()) {
            throw SchemaError(std::string("mast: plan field '") + k + "' missing or not an unsigned integer");
        }
    }
    ChannelPlan plan;
    plan.bottleneck = j["bottleneck"].get<std::size_t>();
    plan.kernel = j["kernel"].get<std::size_t>();
    plan.mid = j["mid"].get<std::size_t>();
    plan.modulated_convs = j["modulated_convs"].get<std::size_t>();
    plan.stem = j["stem"].get<std::size_t>();
    plan.validate();
    return plan;
}

// Parses the header; `data_start` and `data_end` delimit the CRC region.
struct Parsed {
    ContainerInfo info;
    std::size_t data_start = 0;
    std::size_t data_end = 0;
};

Parsed parse(std::span<const std::uint8_t> bytes) {
    auto need = [&](std::size_t end) {
        if (end > bytes.size()) throw IoError("mast: file truncated");
    };
    need(4);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw IntegrityError("mast: bad magic");
    need(12);
    Parsed out;
    out.info.version = get_u32(bytes.data() + 4);
    if (out.info.version != kMastVersion) {
        throw IntegrityError("mast: unsupported version " + std::to_string(out.info.version));
    }
    const std::size_t plan_len = get_u32(bytes.data() + 8);
    std::size_t pos = 12;
    need(pos + plan_len + 4);
    json plan_json;
    json manifest_json;
    try {
        plan_json = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                bytes.begin() + static_cast<std::ptrdiff_t>(pos + plan_len));
        pos += plan_len;
        const std::size_t manifest_len = get_u32(bytes.data() + pos);
        pos += 4;
        need(pos + manifest_len);
        manifest_json = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                    bytes.begin() + static_cast<std::ptrdiff_t>(pos + manifest_len));
        pos += manifest_len;
    } catch (const json::parse_error& e) {
        throw IntegrityError(std::string("mast: malformed JSON header: ") + e.what());
    }
    out.info.plan = plan_from_json(plan_json);

    out.data_start = align_up(pos);
    out.data_end = out.data_start;
    if (!manifest_json.is_array()) throw IntegrityError("mast: manifest is not a JSON array");
    for (const auto& e : manifest_json) {
        try {
            ManifestEntry m;
            m.name = e.at("name").get<std::string>();
            m.dtype = e.at("dtype").get<std::string>();
            m.shape = e.at("shape").get<std::vector<std::size_t>>();
            m.offset = e.at("offset").get<std::size_t>();
            m.nbytes = e.at("nbytes").get<std::size_t>();
            out.info.manifest.push_back(std::move(m));
        } catch (const json::exception& ex) {
            throw IntegrityError(std::string("mast: malformed manifest entry: ") + ex.what());
        }
    }
    bool first = true;
    for (const auto& m : out.info.manifest) {
        if (m.dtype != kDtype) throw IntegrityError("mast: tensor '" + m.name + "' has unsupported dtype " + m.dtype);
        if (m.shape.size() != 4) throw IntegrityError("mast: tensor '" + m.name + "' shape must have 4 extents");
        std::size_t count = 1;
        for (std::size_t d : m.shape) count *= d;
        if (m.nbytes != 4 * count) throw IntegrityError("mast: tensor '" + m.name + "' nbytes does not match shape");
        if (m.offset % kMastAlignment != 0) throw IntegrityError("mast: tensor '" + m.name + "' is misaligned");
        if (m.offset < out.data_end || (!first && m.offset == out.data_end && m.nbytes == 0)) {
            throw IntegrityError("mast: tensor '" + m.name + "' overlaps the header or a previous tensor");
        }
        out.data_end = m.offset + m.nbytes;
        first = false;
    }
    need(out.data_end + 4);
    if (bytes.size() != out.data_end + 4) throw IntegrityError("mast: trailing bytes after checksum");
    out.info.crc = get_u32(bytes.data() + out.data_end);
    const auto region = bytes.subspan(out.data_start, out.data_end - out.data_start);
    if (crc32_of(region) != out.info.crc) throw IntegrityError("mast: CRC mismatch in data region");
    return out;
}

}  // namespace

std::vector<std::uint8_t> serialize_weights(const NetworkWeights& weights) {
    const std::string plan = plan_to_json(weights.plan()).dump();

    // Offsets depend on the manifest length, which depends on the offsets;
    // iterate until the header size is stable.
    std::size_t data_start = 0;
    json manifest;
    for (int pass = 0; pass < 8; ++pass) {
        manifest = json::array();
        std::size_t offset = data_start;
        for (const auto& [name, t] : weights.tensors()) {
            const std::size_t nbytes = t.numel() * 4;
            manifest.push_back(json{{"dtype", kDtype},
                                    {"name", name},
                                    {"nbytes", nbytes},
                                    {"offset", offset},
                                    {"shape", {t.n(), t.c(), t.h(), t.w()}}});
            offset = align_up(offset + nbytes);
        }
        const std::size_t start = align_up(12 + plan.size() + 4 + manifest.dump().size());
        if (start == data_start) break;
        data_start = start;
    }
    const std::string manifest_text = manifest.dump();

    std::vector<std::uint8_t> out;
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(out, kMastVersion);
    put_u32(out, static_cast<std::uint32_t>(plan.size()));
    out.insert(out.end(), plan.begin(), plan.end());
    put_u32(out, static_cast<std::uint32_t>(manifest_text.size()));
    out.insert(out.end(), manifest_text.begin(), manifest_text.end());
    out.resize(data_start, 0);

    std::size_t data_end = data_start;
    for (std::size_t i = 0; i < weights.tensors().size(); ++i) {
        const TensorF32& t = weights.tensors()[i].second;
        const std::size_t offset = manifest[i]["offset"].get<std::size_t>();
        out.resize(offset, 0);
        for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
        data_end = out.size();
    }
    put_u32(out, crc32_of(std::span<const std::uint8_t>(out).subspan(data_start, data_end - data_start)));
    return out;
}

ContainerInfo read_container_info(std::span<const std::uint8_t> bytes) {
    return parse(bytes).info;
}

NetworkWeights deserialize_weights(std::span<const std::uint8_t> bytes) {
    Parsed parsed = parse(bytes);
    std::vector<NetworkWeights::Entry> tensors;
    tensors.reserve(parsed.info.manifest.size());
    for (const auto& m : parsed.info.manifest) {
        const Shape shape{m.shape[0], m.shape[1], m.shape[2], m.shape[3]};
        std::vector<float> data(shape.numel());
        const std::uint8_t* p = bytes.data() + m.offset;
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<float>(get_u32(p + 4 * i));
        tensors.emplace_back(m.name, TensorF32(shape, std::move(data)));
    }
    return NetworkWeights(parsed.info.plan, std::move(tensors));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
    return bytes;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
    }
}

void save_weights(const NetworkWeights& weights, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_weights(weights));
}

NetworkWeights load_weights(const std::filesystem::path& path) {
    return deserialize_weights(read_file(path));
}

}  // namespace microast
