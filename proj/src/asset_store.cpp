#include "xbody/asset_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "xbody/errors.hpp"

namespace xbody {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void swap_if_big_endian(std::vector<T>& values) {
    if constexpr (std::endian::native == std::endian::big) {
        for (auto& v : values) {
            auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
            std::reverse(bytes.begin(), bytes.end());
            v = std::bit_cast<T>(bytes);
        }
    }
}

const char* dtype_name(DType t) { return t == DType::Float32 ? "float32" : "int32"; }

DType parse_dtype(const std::string& s) {
    if (s == "float32") return DType::Float32;
    if (s == "int32") return DType::Int32;
    throw ParseError("asset manifest: unknown dtype '" + s + "'");
}

template <typename T>
std::vector<T> read_raw(const fs::path& path, std::int64_t count) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<T> out(static_cast<size_t>(count));
    in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(count * sizeof(T)));
    if (in.gcount() != static_cast<std::streamsize>(count * sizeof(T)))
        throw IoError("short read on " + path.string());
    in.peek();
    if (!in.eof()) throw IoError("trailing bytes in " + path.string());
    swap_if_big_endian(out);
    return out;
}

template <typename T>
void write_raw(const fs::path& path, std::vector<T> values) {
    swap_if_big_endian(values);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(T)));
    if (!out) throw IoError("write failed on " + path.string());
}

}  // namespace

std::int64_t StoredArray::size() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

ArrayStore ArrayStore::load(const fs::path& dir) {
    const fs::path manifest_path = dir / kManifestName;
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open asset manifest " + manifest_path.string());
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("asset manifest " + manifest_path.string() + ": " + e.what());
    }

    ArrayStore store;
    try {
        if (manifest.value("format", std::string()) != kAssetFormat)
            throw ParseError("asset manifest: unexpected format tag");
        store.meta_ = manifest.value("meta", nlohmann::json::object());
        for (const auto& [name, entry] : manifest.at("arrays").items()) {
            StoredArray a;
            a.dtype = parse_dtype(entry.at("dtype").get<std::string>());
            a.shape = entry.at("shape").get<std::vector<std::int64_t>>();
            for (auto d : a.shape)
                if (d < 0) throw ParseError("asset manifest: negative extent in " + name);
            const fs::path file = dir / entry.at("file").get<std::string>();
            if (a.dtype == DType::Float32)
                a.f32 = read_raw<float>(file, a.size());
            else
                a.i32 = read_raw<std::int32_t>(file, a.size());
            store.arrays_.emplace(name, std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("asset manifest " + manifest_path.string() + ": " + e.what());
    }
    return store;
}

void ArrayStore::save(const fs::path& dir) const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    nlohmann::json manifest;
    manifest["format"] = kAssetFormat;
    manifest["version"] = kAssetFormatVersion;
    manifest["meta"] = meta_;
    manifest["arrays"] = nlohmann::json::object();
    for (const auto& [name, a] : arrays_) {
        const std::string file = name + ".bin";
        manifest["arrays"][name] = {{"dtype", dtype_name(a.dtype)}, {"shape", a.shape}, {"file", file}};
        if (a.dtype == DType::Float32)
            write_raw(dir / file, a.f32);
        else
            write_raw(dir / file, a.i32);
    }
    std::ofstream out(dir / kManifestName, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << "\n";
}

const StoredArray& ArrayStore::array(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ParseError("asset store: missing array '" + name + "'");
    return it->second;
}

std::vector<std::string> ArrayStore::names() const {
    std::vector<std::string> out;
    for (const auto& kv : arrays_) out.push_back(kv.first);
    return out;
}

void ArrayStore::put_matrix(const std::string& name, const Eigen::Ref<const MatX<double>>& m) {
    StoredArray a;
    a.dtype = DType::Float32;
    a.shape = {m.rows(), m.cols()};
    a.f32.resize(static_cast<size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            a.f32[static_cast<size_t>(r * m.cols() + c)] = static_cast<float>(m(r, c));
    arrays_[name] = std::move(a);
}

void ArrayStore::put_vector(const std::string& name, const Eigen::Ref<const VecX<double>>& v) {
    StoredArray a;
    a.dtype = DType::Float32;
    a.shape = {v.size()};
    a.f32.resize(static_cast<size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) a.f32[static_cast<size_t>(i)] = static_cast<float>(v[i]);
    arrays_[name] = std::move(a);
}

void ArrayStore::put_ints(const std::string& name, const std::vector<std::int32_t>& values,
                          std::vector<std::int64_t> shape) {
    StoredArray a;
    a.dtype = DType::Int32;
    a.shape = shape.empty() ? std::vector<std::int64_t>{static_cast<std::int64_t>(values.size())} : std::move(shape);
    if (a.size() != static_cast<std::int64_t>(values.size()))
        throw DimensionMismatch("asset store: shape does not match value count for '" + name + "'");
    a.i32 = values;
    arrays_[name] = std::move(a);
}

void ArrayStore::put_int_matrix(const std::string& name,
                                const Eigen::Ref<const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>>& m) {
    std::vector<std::int32_t> values(static_cast<size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) values[static_cast<size_t>(r * m.cols() + c)] = m(r, c);
    put_ints(name, values, {m.rows(), m.cols()});
}

MatX<double> ArrayStore::matrix(const std::string& name) const {
    const auto& a = array(name);
    if (a.dtype != DType::Float32) throw ParseError("asset store: '" + name + "' is not float32");
    Eigen::Index rows = 0, cols = 0;
    if (a.shape.size() == 2) {
        rows = a.shape[0];
        cols = a.shape[1];
    } else if (a.shape.size() == 1) {
        rows = a.shape[0];
        cols = 1;
    } else {
        throw ParseError("asset store: '" + name + "' is not a matrix");
    }
    MatX<double> m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a.f32[static_cast<size_t>(r * cols + c)];
    return m;
}

VecX<double> ArrayStore::vector(const std::string& name) const {
    const auto& a = array(name);
    if (a.dtype != DType::Float32) throw ParseError("asset store: '" + name + "' is not float32");
    VecX<double> v(static_cast<Eigen::Index>(a.f32.size()));
    for (size_t i = 0; i < a.f32.size(); ++i) v[static_cast<Eigen::Index>(i)] = a.f32[i];
    return v;
}

std::vector<std::int32_t> ArrayStore::ints(const std::string& name) const {
    const auto& a = array(name);
    if (a.dtype != DType::Int32) throw ParseError("asset store: '" + name + "' is not int32");
    return a.i32;
}

Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> ArrayStore::int_matrix(const std::string& name) const {
    const auto& a = array(name);
    if (a.dtype != DType::Int32 || a.shape.size() != 2)
        throw ParseError("asset store: '" + name + "' is not an int32 matrix");
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> m(a.shape[0], a.shape[1]);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = a.i32[static_cast<size_t>(r * m.cols() + c)];
    return m;
}

}  // namespace xbody
