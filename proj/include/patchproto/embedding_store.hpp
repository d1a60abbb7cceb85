#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace patchproto {

struct GridShape {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    std::size_t patches() const { return height * width; }
    friend bool operator==(const GridShape&, const GridShape&) = default;
};

std::string to_string(const GridShape& shape);

// H x W grid of C-dimensional patch embeddings, stored row-major (h, w, c).
// The constructor enforces the shape invariants; finiteness is checked by
// check_finite() and by every consumer that persists or ingests a grid.
class EmbeddingGrid {
public:
    EmbeddingGrid(std::size_t height, std::size_t width, std::size_t channels,
                  std::vector<float> data);

    const GridShape& shape() const { return shape_; }
    std::size_t height() const { return shape_.height; }
    std::size_t width() const { return shape_.width; }
    std::size_t channels() const { return shape_.channels; }
    std::size_t patch_count() const { return shape_.patches(); }

    std::span<const float> patch(std::size_t index) const {
        return {data_.data() + index * shape_.channels, shape_.channels};
    }
    std::span<const float> patch(std::size_t row, std::size_t col) const {
        return patch(row * shape_.width + col);
    }
    std::span<const float> data() const { return data_; }

    // Throws ValidationError naming the first non-finite element.
    void check_finite() const;

    friend bool operator==(const EmbeddingGrid&, const EmbeddingGrid&) = default;

private:
    GridShape shape_;
    std::vector<float> data_;
};

void write_embedding_file(const EmbeddingGrid& grid, const std::filesystem::path& path);
EmbeddingGrid read_embedding_file(const std::filesystem::path& path);
GridShape read_embedding_shape(const std::filesystem::path& path);

enum class SampleRole { normal, anomaly };

std::string_view to_string(SampleRole role);

struct ClassInfo {
    int class_id = 0;
    std::string class_name;
};

struct SampleRecord {
    std::string sample_id;
    // Anomaly samples always carry a class; normal samples may omit it.
    std::optional<int> class_id;
    std::string embedding_file_path;
    SampleRole role = SampleRole::anomaly;
};

struct DatasetManifest {
    std::string dataset_name;
    std::vector<ClassInfo> classes;
    std::vector<SampleRecord> samples;
    // Directory relative embedding paths are resolved against.
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const SampleRecord& sample) const;
    const SampleRecord* find(std::string_view sample_id) const;
    const ClassInfo* find_class(int class_id) const;

    std::vector<const SampleRecord*> normals() const;
    std::vector<const SampleRecord*> anomalies() const;
    // Class ids with at least one anomaly sample, ascending.
    std::vector<int> anomaly_class_ids() const;
};

// Checks id uniqueness, class references and the presence of normal samples.
// Throws ValidationError listing every offender.
void validate_manifest(const DatasetManifest& manifest);

struct ManifestLoadOptions {
    // Reads every embedding header and rejects missing files and
    // heterogeneous dims.
    bool audit_dimensions = true;
};

DatasetManifest load_manifest(const std::filesystem::path& path, ManifestLoadOptions options = {});
DatasetManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir);
std::string manifest_to_json(const DatasetManifest& manifest);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Shape shared by every embedding file in the manifest.
GridShape audit_dimensions(const DatasetManifest& manifest);

// Source of embedding grids by sample id. Implementations must be
// deterministic and safe to call concurrently.
class FeatureProvider {
public:
    virtual ~FeatureProvider() = default;
    virtual EmbeddingGrid load(std::string_view sample_id) const = 0;
};

// Reads precomputed embedding files referenced by a manifest.
class ManifestFeatureProvider final : public FeatureProvider {
public:
    explicit ManifestFeatureProvider(const DatasetManifest& manifest) : manifest_(manifest) {}
    EmbeddingGrid load(std::string_view sample_id) const override;

private:
    const DatasetManifest& manifest_;
};

class InMemoryFeatureProvider final : public FeatureProvider {
public:
    void add(std::string sample_id, EmbeddingGrid grid);
    EmbeddingGrid load(std::string_view sample_id) const override;

private:
    std::map<std::string, EmbeddingGrid, std::less<>> grids_;
};

}  // namespace patchproto
