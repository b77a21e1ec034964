#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "radtk/errors.hpp"
#include "radtk/image.hpp"
#include "radtk/io_util.hpp"
#include "radtk/preprocess.hpp"
#include "radtk/rng.hpp"

namespace radtk {

// Fixed class order shared by every artifact so label indices agree across
// manifests, fold plans, model heads and reports.
inline constexpr int kNumClasses = 4;
inline constexpr std::array<const char*, kNumClasses> kClassNames = {"fillings", "cavity", "implant",
                                                                     "impacted"};

inline int parse_class_label(const std::string& s) {
    for (int i = 0; i < kNumClasses; ++i)
        if (s == kClassNames[static_cast<std::size_t>(i)]) return i;
    return -1;
}

// One labeled bounding box on a radiograph.
struct Annotation {
    std::string image_path;
    BBox box;
    int label = -1;
};

struct ManifestResult {
    std::vector<Annotation> annotations;
    std::vector<std::string> warnings;  // one entry per clamped box
};

// Loads a line-delimited manifest (one JSON object per line with fields
// image, x, y, w, h, label). Relative image paths resolve against the
// manifest's directory. Boxes are clamped to the image bounds, with a warning
// recorded for every record that needed clamping.
inline ManifestResult load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest: " + path);
    const std::string dir = std::filesystem::path(path).parent_path().string();

    ManifestResult result;
    std::map<std::string, std::pair<int, int>> dims_cache;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("manifest parse failure: ") + e.what(), line_no);
        }
        Annotation a;
        try {
            a.image_path = rec.at("image").get<std::string>();
            a.box.x = rec.at("x").get<int>();
            a.box.y = rec.at("y").get<int>();
            a.box.w = rec.at("w").get<int>();
            a.box.h = rec.at("h").get<int>();
            const std::string label = rec.at("label").get<std::string>();
            a.label = parse_class_label(label);
            if (a.label < 0)
                throw ValidationError("unknown label '" + label + "' at manifest line " +
                                      std::to_string(line_no) + " (expected one of fillings, cavity, "
                                      "implant, impacted)");
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("manifest field error: ") + e.what(), line_no);
        }
        if (!dir.empty() && !std::filesystem::path(a.image_path).is_absolute())
            a.image_path = (std::filesystem::path(dir) / a.image_path).string();
        auto it = dims_cache.find(a.image_path);
        if (it == dims_cache.end())
            it = dims_cache.emplace(a.image_path, read_image_dims(a.image_path)).first;
        if (clamp_box(a.box, it->second.first, it->second.second))
            result.warnings.push_back("line " + std::to_string(line_no) + ": box clamped to " +
                                      std::to_string(it->second.first) + "x" +
                                      std::to_string(it->second.second));
        result.annotations.push_back(std::move(a));
    }
    return result;
}

// A materializable training sample: one annotation, one label, an optional
// fold assignment and either an on-disk cache path or in-memory pixels.
struct SampleRecord {
    std::string id;
    std::string image_path;
    BBox box;
    int label = -1;
    int fold = -1;
    std::string cache_path;
    std::shared_ptr<GrayImageF> pixels;
};

inline std::vector<SampleRecord> make_samples(const std::vector<Annotation>& annotations) {
    std::vector<SampleRecord> out;
    out.reserve(annotations.size());
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        SampleRecord r;
        char buf[16];
        std::snprintf(buf, sizeof buf, "a%06zu", i);
        r.id = buf;
        r.image_path = annotations[i].image_path;
        r.box = annotations[i].box;
        r.label = annotations[i].label;
        out.push_back(std::move(r));
    }
    return out;
}

inline std::array<std::int64_t, kNumClasses> class_counts(const std::vector<SampleRecord>& samples) {
    std::array<std::int64_t, kNumClasses> counts{};
    for (const auto& s : samples) ++counts[static_cast<std::size_t>(s.label)];
    return counts;
}

// Reduces every class to the smallest class count by seeded uniform sampling
// without replacement; survivors keep their original relative order.
inline std::vector<SampleRecord> balance_downsample(const std::vector<SampleRecord>& samples,
                                                    std::uint64_t seed) {
    const auto counts = class_counts(samples);
    std::int64_t min_count = -1;
    for (int c = 0; c < kNumClasses; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0)
            throw ValidationError(std::string("cannot balance: class '") +
                                  kClassNames[static_cast<std::size_t>(c)] + "' has no samples");
        if (min_count < 0 || counts[static_cast<std::size_t>(c)] < min_count)
            min_count = counts[static_cast<std::size_t>(c)];
    }
    std::vector<bool> keep(samples.size(), false);
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (samples[i].label == c) members.push_back(i);
        if (static_cast<std::int64_t>(members.size()) > min_count) {
            RngState rng = RngState(seed).split(0xBA1A0000ULL + static_cast<std::uint64_t>(c));
            rng.shuffle(members.begin(), members.end());
            members.resize(static_cast<std::size_t>(min_count));
        }
        for (std::size_t i : members) keep[i] = true;
    }
    std::vector<SampleRecord> out;
    out.reserve(static_cast<std::size_t>(min_count) * kNumClasses);
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (keep[i]) out.push_back(samples[i]);
    return out;
}

// Stratified fold assignment: ids -> fold index.
struct FoldPlan {
    int k = 5;
    std::uint64_t seed = 0;
    std::map<std::string, int> assignments;
};

// Within each class the ids are shuffled under the seed and dealt round-robin
// to folds. Each class starts the deal at a different fold (class index mod k)
// so the leftover samples of the four classes spread across folds and total
// fold sizes stay within one of each other.
inline FoldPlan kfold_split(const std::vector<SampleRecord>& samples, int k, std::uint64_t seed) {
    if (k < 2) throw ParamError("k-fold split needs k >= 2 (no train portion otherwise)");
    if (static_cast<std::size_t>(k) > samples.size())
        throw ParamError("k=" + std::to_string(k) + " exceeds sample count " +
                         std::to_string(samples.size()));
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    for (int c = 0; c < kNumClasses; ++c) {
        std::vector<const SampleRecord*> members;
        for (const auto& s : samples)
            if (s.label == c) members.push_back(&s);
        RngState rng = RngState(seed).split(0xF01D0000ULL + static_cast<std::uint64_t>(c));
        rng.shuffle(members.begin(), members.end());
        for (std::size_t i = 0; i < members.size(); ++i)
            plan.assignments[members[i]->id] = static_cast<int>((i + static_cast<std::size_t>(c)) %
                                                                static_cast<std::size_t>(k));
    }
    return plan;
}

inline void apply_fold_plan(std::vector<SampleRecord>& samples, const FoldPlan& plan) {
    for (auto& s : samples) {
        auto it = plan.assignments.find(s.id);
        if (it == plan.assignments.end())
            throw ValidationError("fold plan does not cover sample id " + s.id);
        s.fold = it->second;
    }
}

inline void save_fold_plan(const std::string& path, const FoldPlan& plan) {
    std::ostringstream out;
    for (const auto& [id, fold] : plan.assignments) out << id << " " << fold << "\n";
    write_file_atomic(path, out.str());
}

inline FoldPlan load_fold_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open fold plan: " + path);
    FoldPlan plan;
    plan.k = 0;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string id;
        int fold = -1;
        if (!(ls >> id >> fold) || fold < 0) throw ParseError("malformed fold plan entry", line_no);
        plan.assignments[id] = fold;
        plan.k = std::max(plan.k, fold + 1);
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Sample cache: 16-byte header (magic "RDXS", version, H, W as 32-bit LE)
// followed by H*W little-endian 32-bit floats.

inline constexpr std::uint32_t kSampleCacheVersion = 1;

inline void write_sample_cache(const std::string& path, const GrayImageF& img) {
    std::string buf;
    buf.resize(16 + img.pixels.size() * 4);
    std::memcpy(buf.data(), "RDXS", 4);
    const std::uint32_t v = kSampleCacheVersion;
    const std::uint32_t h = static_cast<std::uint32_t>(img.height);
    const std::uint32_t w = static_cast<std::uint32_t>(img.width);
    std::memcpy(buf.data() + 4, &v, 4);
    std::memcpy(buf.data() + 8, &h, 4);
    std::memcpy(buf.data() + 12, &w, 4);
    std::memcpy(buf.data() + 16, img.pixels.data(), img.pixels.size() * 4);
    write_file_atomic(path, buf);
}

inline GrayImageF read_sample_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open sample cache: " + path);
    char hdr[16];
    in.read(hdr, 16);
    if (in.gcount() != 16 || std::memcmp(hdr, "RDXS", 4) != 0)
        throw IoError("bad sample cache header: " + path);
    std::uint32_t v, h, w;
    std::memcpy(&v, hdr + 4, 4);
    std::memcpy(&h, hdr + 8, 4);
    std::memcpy(&w, hdr + 12, 4);
    if (v != kSampleCacheVersion)
        throw IoError("unsupported sample cache version " + std::to_string(v) + ": " + path);
    GrayImageF img(static_cast<int>(w), static_cast<int>(h));
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size() * 4))
        throw IoError("truncated sample cache payload: " + path);
    return img;
}

// Pixels for a sample, from memory or the cache file.
inline GrayImageF load_sample_image(const SampleRecord& rec) {
    if (rec.pixels) return *rec.pixels;
    if (!rec.cache_path.empty()) return read_sample_cache(rec.cache_path);
    throw UsageError("sample " + rec.id + " has neither in-memory pixels nor a cache path");
}

// Runs the preprocessing pipeline for every record and attaches results.
// to_cache_dir != "" writes RDXS files there; otherwise pixels stay in memory.
// Records are independent, so the work parallelizes across threads without
// affecting results.
inline void materialize_samples(std::vector<SampleRecord>& samples, const std::string& cache_dir,
                                int out_size = 224, int threads = 1) {
    if (!cache_dir.empty()) std::filesystem::create_directories(cache_dir);
    auto worker = [&](std::size_t begin, std::size_t end) {
        std::map<std::string, GrayImage> decode_cache;
        for (std::size_t i = begin; i < end; ++i) {
            SampleRecord& rec = samples[i];
            auto it = decode_cache.find(rec.image_path);
            if (it == decode_cache.end()) {
                if (decode_cache.size() > 64) decode_cache.clear();
                it = decode_cache.emplace(rec.image_path, read_image(rec.image_path)).first;
            }
            GrayImageF processed = run_pipeline(it->second, rec.box, out_size);
            if (!cache_dir.empty()) {
                rec.cache_path = (std::filesystem::path(cache_dir) / (rec.id + ".rdxs")).string();
                write_sample_cache(rec.cache_path, processed);
                rec.pixels.reset();
            } else {
                rec.pixels = std::make_shared<GrayImageF>(std::move(processed));
            }
        }
    };
    if (threads <= 1 || samples.size() < 2) {
        worker(0, samples.size());
        return;
    }
    const std::size_t n = samples.size();
    const std::size_t nt = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) {
        const std::size_t begin = n * t / nt;
        const std::size_t end = n * (t + 1) / nt;
        pool.emplace_back(worker, begin, end);
    }
    for (auto& th : pool) th.join();
}

}  // namespace radtk
