#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "radtk/errors.hpp"
#include "radtk/io_util.hpp"
#include "radtk/model.hpp"
#include "radtk/tensor.hpp"

namespace radtk {

static_assert(std::endian::native == std::endian::little,
              "archive payloads are little-endian; big-endian hosts are unsupported");

// Versioned tensor container: a text manifest (one "name dtype shape offset"
// line per tensor) plus a single raw little-endian payload file. Used for
// model weights, extracted features and fitted classical models.
class WeightArchive {
public:
    struct Entry {
        std::string dtype;        // f32 | f64 | i32 | i64
        std::vector<int> shape;
        std::uint64_t offset = 0; // byte offset into the payload
    };

    static constexpr const char* kMagic = "radtk-archive";
    static constexpr int kVersion = 1;

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    static std::size_t dtype_size(const std::string& dtype) {
        if (dtype == "f32" || dtype == "i32") return 4;
        if (dtype == "f64" || dtype == "i64") return 8;
        throw ParamError("unknown dtype: " + dtype);
    }

    template <typename T>
    void add(const std::string& name, const std::string& dtype, const std::vector<int>& shape,
             const T* values, std::int64_t count) {
        if (count != shape_product(shape))
            throw ShapeError("archive tensor " + name + ": " + std::to_string(count) +
                             " values vs shape " + shape_string(shape));
        Entry e;
        e.dtype = dtype;
        e.shape = shape;
        e.offset = payload_.size();
        const std::size_t bytes = dtype_size(dtype) * static_cast<std::size_t>(count);
        payload_.resize(payload_.size() + bytes);
        write_values(dtype, values, count, payload_.data() + e.offset);
        entries_[name] = e;
    }

    template <typename T>
    void add_tensor_f32(const std::string& name, const Tensor<T>& t) {
        std::vector<float> tmp(t.data.begin(), t.data.end());
        add(name, "f32", t.shape, tmp.data(), t.size());
    }

    void add_f64(const std::string& name, const std::vector<int>& shape, const std::vector<double>& v) {
        add(name, "f64", shape, v.data(), static_cast<std::int64_t>(v.size()));
    }
    void add_i64(const std::string& name, const std::vector<int>& shape, const std::vector<std::int64_t>& v) {
        add(name, "i64", shape, v.data(), static_cast<std::int64_t>(v.size()));
    }
    void add_i32(const std::string& name, const std::vector<int>& shape, const std::vector<std::int32_t>& v) {
        add(name, "i32", shape, v.data(), static_cast<std::int64_t>(v.size()));
    }

    const Entry& entry(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw IoError("archive tensor not found: " + name);
        return it->second;
    }

    template <typename Out>
    std::vector<Out> values(const std::string& name) const {
        const Entry& e = entry(name);
        const std::int64_t count = shape_product(e.shape);
        const std::size_t bytes = dtype_size(e.dtype) * static_cast<std::size_t>(count);
        if (e.offset + bytes > payload_.size())
            throw IoError("archive payload truncated for tensor " + name);
        std::vector<Out> out(static_cast<std::size_t>(count));
        read_values(e.dtype, payload_.data() + e.offset, count, out.data());
        return out;
    }

    template <typename T>
    Tensor<T> tensor(const std::string& name) const {
        return Tensor<T>::from_data(entry(name).shape, values<T>(name));
    }

    // Writes <base>.manifest and <base>.bin atomically (temp file + rename).
    void save(const std::string& base) const {
        std::ostringstream man;
        man << kMagic << " " << kVersion << "\n";
        for (const auto& [name, e] : entries_) {
            man << name << " " << e.dtype << " ";
            for (std::size_t i = 0; i < e.shape.size(); ++i) man << (i ? "x" : "") << e.shape[i];
            man << " " << e.offset << "\n";
        }
        write_file_atomic(base + ".manifest", man.str());
        write_file_atomic(base + ".bin",
                          std::string(reinterpret_cast<const char*>(payload_.data()), payload_.size()));
    }

    static WeightArchive load(const std::string& base) {
        WeightArchive a;
        std::ifstream man(base + ".manifest");
        if (!man) throw IoError("cannot open archive manifest: " + base + ".manifest");
        std::string line;
        int line_no = 0;
        if (!std::getline(man, line)) throw ParseError("empty archive manifest", 1);
        ++line_no;
        {
            std::istringstream hs(line);
            std::string magic;
            int version = 0;
            hs >> magic >> version;
            if (magic != kMagic) throw ParseError("bad archive magic '" + magic + "'", line_no);
            if (version != kVersion)
                throw ParseError("unsupported archive version " + std::to_string(version), line_no);
        }
        while (std::getline(man, line)) {
            ++line_no;
            if (line.empty()) continue;
            std::istringstream ls(line);
            std::string name, dtype, shape_str;
            std::uint64_t offset = 0;
            if (!(ls >> name >> dtype >> shape_str >> offset))
                throw ParseError("malformed manifest entry", line_no);
            Entry e;
            e.dtype = dtype;
            dtype_size(dtype);
            e.offset = offset;
            std::istringstream ss(shape_str);
            std::string dim;
            while (std::getline(ss, dim, 'x')) e.shape.push_back(std::stoi(dim));
            a.entries_[name] = e;
        }
        std::ifstream bin(base + ".bin", std::ios::binary);
        if (!bin) throw IoError("cannot open archive payload: " + base + ".bin");
        a.payload_.assign(std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>());
        for (const auto& [name, e] : a.entries_) {
            const std::size_t bytes = dtype_size(e.dtype) *
                                      static_cast<std::size_t>(shape_product(e.shape));
            if (e.offset + bytes > a.payload_.size())
                throw IoError("archive payload truncated for tensor " + name);
        }
        return a;
    }

private:
    std::map<std::string, Entry> entries_;
    std::vector<unsigned char> payload_;

    template <typename T>
    static void write_values(const std::string& dtype, const T* src, std::int64_t count,
                             unsigned char* dst) {
        if (dtype == "f32") {
            for (std::int64_t i = 0; i < count; ++i) {
                const float v = static_cast<float>(src[i]);
                std::memcpy(dst + i * 4, &v, 4);
            }
        } else if (dtype == "f64") {
            for (std::int64_t i = 0; i < count; ++i) {
                const double v = static_cast<double>(src[i]);
                std::memcpy(dst + i * 8, &v, 8);
            }
        } else if (dtype == "i32") {
            for (std::int64_t i = 0; i < count; ++i) {
                const std::int32_t v = static_cast<std::int32_t>(src[i]);
                std::memcpy(dst + i * 4, &v, 4);
            }
        } else {
            for (std::int64_t i = 0; i < count; ++i) {
                const std::int64_t v = static_cast<std::int64_t>(src[i]);
                std::memcpy(dst + i * 8, &v, 8);
            }
        }
    }

    template <typename Out>
    static void read_values(const std::string& dtype, const unsigned char* src, std::int64_t count,
                            Out* dst) {
        if (dtype == "f32") {
            for (std::int64_t i = 0; i < count; ++i) {
                float v;
                std::memcpy(&v, src + i * 4, 4);
                dst[i] = static_cast<Out>(v);
            }
        } else if (dtype == "f64") {
            for (std::int64_t i = 0; i < count; ++i) {
                double v;
                std::memcpy(&v, src + i * 8, 8);
                dst[i] = static_cast<Out>(v);
            }
        } else if (dtype == "i32") {
            for (std::int64_t i = 0; i < count; ++i) {
                std::int32_t v;
                std::memcpy(&v, src + i * 4, 4);
                dst[i] = static_cast<Out>(v);
            }
        } else {
            for (std::int64_t i = 0; i < count; ++i) {
                std::int64_t v;
                std::memcpy(&v, src + i * 8, 8);
                dst[i] = static_cast<Out>(v);
            }
        }
    }
};

// Snapshot of every model parameter (including batchnorm statistics) as f32.
template <typename T>
WeightArchive save_weights(Model<T>& model) {
    WeightArchive a;
    for (const auto& p : model.params()) a.add_tensor_f32(p.name, *p.tensor);
    return a;
}

// All-or-nothing load: every model parameter must resolve to an archive
// tensor of the exact shape or the whole load fails listing every mismatch.
template <typename T>
void load_weights(Model<T>& model, const WeightArchive& archive) {
    std::vector<std::string> problems;
    auto params = model.params();
    for (const auto& p : params) {
        if (!archive.has(p.name)) {
            problems.push_back("missing tensor: " + p.name);
            continue;
        }
        const auto& e = archive.entry(p.name);
        if (e.shape != p.tensor->shape)
            problems.push_back("shape mismatch: " + p.name + " archive " + shape_string(e.shape) +
                               " vs model " + shape_string(p.tensor->shape));
    }
    if (!problems.empty()) {
        std::string msg = "weight load failed (" + std::to_string(problems.size()) + " problems):";
        for (const auto& s : problems) msg += "\n  " + s;
        throw ValidationError(msg);
    }
    for (const auto& p : params) {
        p.tensor->data = archive.values<T>(p.name);
        p.tensor->grad.clear();
    }
}

}  // namespace radtk
