#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "xbody/types.hpp"

namespace xbody {

enum class DType { Float32, Int32 };

struct StoredArray {
    DType dtype = DType::Float32;
    std::vector<std::int64_t> shape;
    std::vector<float> f32;
    std::vector<std::int32_t> i32;

    std::int64_t size() const;
};

/// Named, typed, row-major arrays plus free-form metadata, persisted as a
/// directory holding `manifest.json` and one raw little-endian file per array.
/// Values are kept in their on-disk representation so save(load(dir)) is
/// byte-identical.
class ArrayStore {
public:
    static ArrayStore load(const std::filesystem::path& dir);
    void save(const std::filesystem::path& dir) const;

    bool has(const std::string& name) const { return arrays_.count(name) > 0; }
    const StoredArray& array(const std::string& name) const;
    std::vector<std::string> names() const;

    nlohmann::json& meta() { return meta_; }
    const nlohmann::json& meta() const { return meta_; }

    // Floating point data is narrowed to float32 on insertion.
    void put_matrix(const std::string& name, const Eigen::Ref<const MatX<double>>& m);
    void put_vector(const std::string& name, const Eigen::Ref<const VecX<double>>& v);
    void put_ints(const std::string& name, const std::vector<std::int32_t>& values,
                  std::vector<std::int64_t> shape = {});
    void put_int_matrix(const std::string& name,
                        const Eigen::Ref<const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>>& m);

    MatX<double> matrix(const std::string& name) const;
    VecX<double> vector(const std::string& name) const;
    std::vector<std::int32_t> ints(const std::string& name) const;
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> int_matrix(const std::string& name) const;

private:
    std::map<std::string, StoredArray> arrays_;
    nlohmann::json meta_ = nlohmann::json::object();
};

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kAssetFormat = "xbody-array-store";
inline constexpr int kAssetFormatVersion = 1;

}  // namespace xbody
