#include "patchproto/embedding_store.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "patchproto/container.hpp"
#include "patchproto/errors.hpp"

namespace patchproto {
namespace {

using nlohmann::json;

std::string join(const std::vector<std::string>& items, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::uint32_t checked_u32(std::size_t v, const char* field) {
    if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw ValidationError(std::string(field) + " exceeds u32 range");
    }
    return static_cast<std::uint32_t>(v);
}

SampleRole parse_role(const std::string& s, const std::string& sample_id) {
    if (s == "normal") return SampleRole::normal;
    if (s == "anomaly") return SampleRole::anomaly;
    throw ValidationError("sample '" + sample_id + "': unknown role '" + s + "'");
}

}  // namespace

std::string to_string(const GridShape& shape) {
    return std::to_string(shape.height) + "x" + std::to_string(shape.width) + "x" +
           std::to_string(shape.channels);
}

EmbeddingGrid::EmbeddingGrid(std::size_t height, std::size_t width, std::size_t channels,
                             std::vector<float> data)
    : shape_{height, width, channels}, data_(std::move(data)) {
    if (height == 0 || width == 0 || channels == 0) {
        throw ValidationError("embedding grid dims must be >= 1, got " + to_string(shape_));
    }
    if (data_.size() != height * width * channels) {
        throw ValidationError("embedding grid " + to_string(shape_) + " needs " +
                              std::to_string(height * width * channels) + " values, got " +
                              std::to_string(data_.size()));
    }
}

void EmbeddingGrid::check_finite() const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            const std::size_t c = i % shape_.channels;
            const std::size_t p = i / shape_.channels;
            throw ValidationError("non-finite embedding value at (row " +
                                  std::to_string(p / shape_.width) + ", col " +
                                  std::to_string(p % shape_.width) + ", channel " +
                                  std::to_string(c) + ")");
        }
    }
}

void write_embedding_file(const EmbeddingGrid& grid, const std::filesystem::path& path) {
    grid.check_finite();
    ContainerHeader header;
    header.magic = kEmbeddingMagic;
    header.height = checked_u32(grid.height(), "height");
    header.width = checked_u32(grid.width(), "width");
    header.channels = checked_u32(grid.channels(), "channels");
    write_container(path, header, grid.data());
}

EmbeddingGrid read_embedding_file(const std::filesystem::path& path) {
    Container c = read_container(path, kEmbeddingMagic);
    if (c.header.height == 0 || c.header.width == 0 || c.header.channels == 0) {
        throw FormatError("dims: zero-sized dimension in '" + path.string() + "'");
    }
    EmbeddingGrid grid(c.header.height, c.header.width, c.header.channels, std::move(c.payload));
    try {
        grid.check_finite();
    } catch (const ValidationError& e) {
        throw FormatError(std::string("payload: ") + e.what() + " in '" + path.string() + "'");
    }
    return grid;
}

GridShape read_embedding_shape(const std::filesystem::path& path) {
    const ContainerHeader h = read_container_header(path, kEmbeddingMagic);
    return {h.height, h.width, h.channels};
}

std::string_view to_string(SampleRole role) {
    return role == SampleRole::normal ? "normal" : "anomaly";
}

std::filesystem::path DatasetManifest::resolve(const SampleRecord& sample) const {
    std::filesystem::path p(sample.embedding_file_path);
    return p.is_absolute() ? p : base_dir / p;
}

const SampleRecord* DatasetManifest::find(std::string_view sample_id) const {
    for (const auto& s : samples) {
        if (s.sample_id == sample_id) return &s;
    }
    return nullptr;
}

const ClassInfo* DatasetManifest::find_class(int class_id) const {
    for (const auto& c : classes) {
        if (c.class_id == class_id) return &c;
    }
    return nullptr;
}

std::vector<const SampleRecord*> DatasetManifest::normals() const {
    std::vector<const SampleRecord*> out;
    for (const auto& s : samples) {
        if (s.role == SampleRole::normal) out.push_back(&s);
    }
    return out;
}

std::vector<const SampleRecord*> DatasetManifest::anomalies() const {
    std::vector<const SampleRecord*> out;
    for (const auto& s : samples) {
        if (s.role == SampleRole::anomaly) out.push_back(&s);
    }
    return out;
}

std::vector<int> DatasetManifest::anomaly_class_ids() const {
    std::set<int> ids;
    for (const auto& s : samples) {
        if (s.role == SampleRole::anomaly && s.class_id) ids.insert(*s.class_id);
    }
    return {ids.begin(), ids.end()};
}

void validate_manifest(const DatasetManifest& manifest) {
    std::vector<std::string> problems;

    std::set<int> class_ids;
    for (const auto& c : manifest.classes) {
        if (c.class_id < 0) {
            problems.push_back("class_id " + std::to_string(c.class_id) + " is negative");
        }
        if (!class_ids.insert(c.class_id).second) {
            problems.push_back("duplicate class_id " + std::to_string(c.class_id));
        }
    }

    std::set<std::string> ids;
    std::size_t normal_count = 0;
    for (const auto& s : manifest.samples) {
        if (s.sample_id.empty()) {
            problems.push_back("sample with empty sample_id");
        } else if (!ids.insert(s.sample_id).second) {
            problems.push_back("duplicate sample_id '" + s.sample_id + "'");
        }
        if (s.embedding_file_path.empty()) {
            problems.push_back("sample '" + s.sample_id + "' has no embedding_file_path");
        }
        if (s.role == SampleRole::normal) ++normal_count;
        if (s.role == SampleRole::anomaly && !s.class_id) {
            problems.push_back("anomaly sample '" + s.sample_id + "' has no class_id");
        }
        if (s.class_id && !class_ids.contains(*s.class_id)) {
            problems.push_back("sample '" + s.sample_id + "' references unknown class_id " +
                               std::to_string(*s.class_id));
        }
    }
    if (normal_count == 0) {
        problems.push_back("no samples with role=normal");
    }
    if (!problems.empty()) {
        throw ValidationError("invalid manifest '" + manifest.dataset_name + "': " +
                              join(problems, "; "));
    }
}

GridShape audit_dimensions(const DatasetManifest& manifest) {
    std::vector<std::string> problems;
    std::optional<GridShape> reference;
    std::string reference_id;
    for (const auto& s : manifest.samples) {
        GridShape shape;
        try {
            shape = read_embedding_shape(manifest.resolve(s));
        } catch (const Error& e) {
            problems.push_back("sample '" + s.sample_id + "': " + e.what());
            continue;
        }
        if (!reference) {
            reference = shape;
            reference_id = s.sample_id;
        } else if (shape != *reference) {
            problems.push_back("sample '" + s.sample_id + "' has dims " + to_string(shape) +
                               ", expected " + to_string(*reference) + " (from '" +
                               reference_id + "')");
        }
    }
    if (!problems.empty()) {
        throw ValidationError("dimension audit failed: " + join(problems, "; "));
    }
    if (!reference) {
        throw ValidationError("dimension audit: manifest has no samples");
    }
    return *reference;
}

DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
    }

    DatasetManifest m;
    m.base_dir = base_dir;
    try {
        m.dataset_name = doc.at("dataset_name").get<std::string>();
        for (const auto& c : doc.at("classes")) {
            m.classes.push_back({c.at("class_id").get<int>(), c.at("class_name").get<std::string>()});
        }
        for (const auto& s : doc.at("samples")) {
            SampleRecord r;
            r.sample_id = s.at("sample_id").get<std::string>();
            if (s.contains("class_id") && !s.at("class_id").is_null()) {
                r.class_id = s.at("class_id").get<int>();
            }
            r.embedding_file_path = s.at("embedding_file_path").get<std::string>();
            r.role = parse_role(s.at("role").get<std::string>(), r.sample_id);
            m.samples.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("manifest field error: ") + e.what());
    }
    validate_manifest(m);
    return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path, ManifestLoadOptions options) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest '" + path.string() + "'");
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    DatasetManifest m = parse_manifest(buffer.str(), path.parent_path());
    if (options.audit_dimensions) {
        audit_dimensions(m);
    }
    return m;
}

std::string manifest_to_json(const DatasetManifest& manifest) {
    json doc;
    doc["dataset_name"] = manifest.dataset_name;
    doc["classes"] = json::array();
    for (const auto& c : manifest.classes) {
        doc["classes"].push_back({{"class_id", c.class_id}, {"class_name", c.class_name}});
    }
    doc["samples"] = json::array();
    for (const auto& s : manifest.samples) {
        json entry;
        entry["sample_id"] = s.sample_id;
        entry["class_id"] = s.class_id ? json(*s.class_id) : json(nullptr);
        entry["embedding_file_path"] = s.embedding_file_path;
        entry["role"] = std::string(to_string(s.role));
        doc["samples"].push_back(std::move(entry));
    }
    return doc.dump(2);
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    validate_manifest(manifest);
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << manifest_to_json(manifest) << '\n';
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

EmbeddingGrid ManifestFeatureProvider::load(std::string_view sample_id) const {
    const SampleRecord* s = manifest_.find(sample_id);
    if (!s) {
        throw ValidationError("unknown sample_id '" + std::string(sample_id) + "'");
    }
    try {
        return read_embedding_file(manifest_.resolve(*s));
    } catch (const Error& e) {
        throw IoError("sample '" + std::string(sample_id) + "': " + e.what());
    }
}

void InMemoryFeatureProvider::add(std::string sample_id, EmbeddingGrid grid) {
    grids_.insert_or_assign(std::move(sample_id), std::move(grid));
}

EmbeddingGrid InMemoryFeatureProvider::load(std::string_view sample_id) const {
    auto it = grids_.find(sample_id);
    if (it == grids_.end()) {
        throw IoError("sample '" + std::string(sample_id) + "': no embedding registered");
    }
    return it->second;
}

}  // namespace patchproto
