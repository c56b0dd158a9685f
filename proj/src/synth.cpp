#include "landseg/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>
#include <thread>

#include "landseg/core/container.hpp"
#include "landseg/core/render.hpp"

#include <atomic>

namespace landseg {

namespace {

constexpr int32_t kIgnore = 255;

Eigen::VectorXd vec_from(std::initializer_list<double> vals) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

// Nearest-seed (Voronoi) partition of an h*w grid into `regions` cells.
// Returns per-pixel region index.
std::vector<int> voronoi_partition(int h, int w, int regions, Rng& rng) {
    struct Seed {
        double y, x;
    };
    std::vector<Seed> seeds(static_cast<size_t>(regions));
    for (auto& s : seeds) {
        s.y = rng.uniform(0.0, static_cast<double>(h));
        s.x = rng.uniform(0.0, static_cast<double>(w));
    }
    std::vector<int> region(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int best = 0;
            double bd = 1e300;
            for (int r = 0; r < regions; ++r) {
                const double dy = seeds[static_cast<size_t>(r)].y - (y + 0.5);
                const double dx = seeds[static_cast<size_t>(r)].x - (x + 0.5);
                const double d = dy * dy + dx * dx;
                if (d < bd) {
                    bd = d;
                    best = r;
                }
            }
            region[static_cast<size_t>(y) * w + x] = best;
        }
    }
    return region;
}

struct PatchPair {
    MultispectralImage image;
    LabelMask label;
};

PatchPair generate_patch(const SubsetSpec& spec, const ClassTaxonomy& taxonomy, uint64_t seed,
                         int index) {
    Rng rng(mix_seed(seed, spec.id + "/patch/" + std::to_string(index)));
    const int n = spec.patch_size;
    const int k = taxonomy.size();
    const int regions = std::max(6, n * n / 256);
    std::vector<int> region = voronoi_partition(n, n, regions, rng);

    std::vector<int> region_class(static_cast<size_t>(regions));
    std::vector<double> region_gain(static_cast<size_t>(regions));
    for (int r = 0; r < regions; ++r) {
        region_class[static_cast<size_t>(r)] = rng.uniform_int(k);
        region_gain[static_cast<size_t>(r)] = rng.normal(1.0, 0.05);
    }

    PatchPair out;
    out.label.classes = TensorI({n, n});
    out.label.ignore_value = kIgnore;
    out.label.quality = LabelQuality::exact;
    out.label.taxonomy_id = taxonomy.taxonomy_id;
    for (Eigen::Index p = 0; p < out.label.classes.numel(); ++p)
        out.label.classes(p) = region_class[static_cast<size_t>(region[static_cast<size_t>(p)])];

    const int c = static_cast<int>(spec.wavelengths.size());
    out.image.pixels = TensorD({c, n, n});
    out.image.wavelengths = spec.wavelengths;
    out.image.gsd = spec.gsd;
    out.image.subset_id = spec.id;
    // Class-conditional spectra plus region illumination and pixel noise.
    std::vector<std::vector<double>> spectra(static_cast<size_t>(k),
                                             std::vector<double>(static_cast<size_t>(c)));
    for (int cls = 0; cls < k; ++cls)
        for (int b = 0; b < c; ++b)
            spectra[static_cast<size_t>(cls)][static_cast<size_t>(b)] =
                class_spectrum(taxonomy.classes[static_cast<size_t>(cls)].canonical(),
                               spec.wavelengths[b]);
    const Eigen::Index hw = static_cast<Eigen::Index>(n) * n;
    for (Eigen::Index p = 0; p < hw; ++p) {
        const int r = region[static_cast<size_t>(p)];
        const int cls = region_class[static_cast<size_t>(r)];
        const double gain = region_gain[static_cast<size_t>(r)];
        for (int b = 0; b < c; ++b)
            out.image.pixels.data[b * hw + p] =
                spectra[static_cast<size_t>(cls)][static_cast<size_t>(b)] * gain +
                rng.normal(0.0, 0.12);
    }
    return out;
}

int env_workers() {
    const char* s = std::getenv("LANDSEG_NUM_WORKERS");
    if (!s) return 1;
    const int n = std::atoi(s);
    return n > 1 ? n : 1;
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

const std::map<std::string, std::string>& synonym_table() {
    // Phrase-level unifications mirroring the shipped renaming rules.
    static const std::map<std::string, std::string> table = {
        {"open water", "water"},
        {"water body", "water"},
        {"water bodies", "water"},
        {"permanent water bodies", "water"},
        {"bareland", "barren land"},
        {"bare soil", "bare land"},
        {"woodland", "forest"},
    };
    return table;
}

bool is_connector(const std::string& w) {
    return w == "and" || w == "or" || w == "except" || w == "for" || w == "including";
}

std::string singularize_word(const std::string& w) {
    const size_t n = w.size();
    if (n >= 4 && w.compare(n - 3, 3, "ies") == 0) return w.substr(0, n - 3) + "y";
    if (n >= 3 && (w.compare(n - 2, 2, "ss") == 0 || w.compare(n - 2, 2, "us") == 0 ||
                   w.compare(n - 2, 2, "is") == 0))
        return w;
    if (n >= 2 && w.back() == 's') return w.substr(0, n - 1);
    return w;
}

}  // namespace

const std::vector<std::vector<std::string>>& class_name_pool() {
    static const std::vector<std::vector<std::string>> pool = {
        {"water", "open water", "water body", "lakes, reservoirs, rivers and ocean"},
        {"tree", "forest", "wood"},
        {"grass", "grassland", "herbaceous vegetation"},
        {"crop", "agricultural land", "cropland"},
        {"building", "man-made structure"},
        {"road", "transportation"},
        {"barren land", "bare land", "rock, sand, clay and soil"},
        {"wetland", "herbaceous wetland"},
        {"shrub", "scrub", "shrubland"},
        {"snow and ice", "ice and snow"},
        {"residential area", "urban housing"},
        {"developed area except for building", "built-up area except for building"},
        {"marshland", "marsh"},
        {"sand", "dune"},
        {"mangrove", "coastal mangrove"},
        {"moss and lichen", "tundra vegetation"},
    };
    return pool;
}

double class_spectrum(const std::string& canonical_name, double wavelength_um) {
    // Smooth pseudo-random curve keyed on the class name so a class has the
    // same signature in every subset and at any band layout.
    Rng rng(mix_seed(0x5eedULL, "spectrum/" + canonical_name));
    const double base = rng.uniform(0.3, 0.9);
    static const double freqs[3] = {0.8, 1.6, 2.9};
    double v = base;
    for (double f : freqs) {
        const double amp = rng.uniform(0.15, 0.45);
        const double phase = rng.uniform(0.0, 2.0 * M_PI);
        v += amp * std::cos(2.0 * M_PI * f * (wavelength_um - 0.4) + phase);
    }
    return v;
}

void SyntheticSceneSpec::validate() const {
    if (subsets.empty()) throw ValidationError("scene spec: no subsets");
    if (alignment <= 0) throw ValidationError("scene spec: alignment must be positive");
    std::map<std::string, int> ids;
    for (const auto& s : subsets) {
        if (s.id.empty()) throw ValidationError("scene spec: subset id must be non-empty");
        if (++ids[s.id] > 1) throw ValidationError("scene spec: duplicate subset id " + s.id);
        if (s.num_classes <= 0)
            throw ValidationError("scene spec: subset " + s.id + " has zero classes");
        if (s.num_classes > static_cast<int>(class_name_pool().size()))
            throw ValidationError("scene spec: subset " + s.id + " wants more classes than the pool has");
        if (s.patches <= 0)
            throw ValidationError("scene spec: subset " + s.id + " has no patches");
        if (s.patch_size <= 0 || s.patch_size % alignment != 0)
            throw ValidationError("scene spec: subset " + s.id + " patch size " +
                                  std::to_string(s.patch_size) + " not divisible by " +
                                  std::to_string(alignment));
        if (s.wavelengths.size() < 1)
            throw ValidationError("scene spec: subset " + s.id + " has no bands");
        for (Eigen::Index i = 0; i < s.wavelengths.size(); ++i)
            if (!(s.wavelengths[i] > 0.0))
                throw ValidationError("scene spec: subset " + s.id + " has non-positive wavelength");
        if (!(s.noise_rate >= 0.0 && s.noise_rate < 1.0))
            throw ValidationError("scene spec: subset " + s.id + " noise rate must be in [0,1)");
        if (s.noise_rate > 0.0 && s.num_classes < 2)
            throw ValidationError("scene spec: subset " + s.id +
                                  " cannot corrupt labels with a single class");
        if (!s.class_names.empty() &&
            static_cast<int>(s.class_names.size()) != s.num_classes)
            throw ValidationError("scene spec: subset " + s.id +
                                  " class name list does not match num_classes");
    }
}

SyntheticSceneSpec SyntheticSceneSpec::las_default(uint64_t seed) {
    // Eight heterogeneous subsets: two exact high-resolution ones and six
    // weak product-style ones at S2/Landsat band layouts.
    SyntheticSceneSpec spec;
    spec.seed = seed;
    const Eigen::VectorXd rgb = vec_from({0.665, 0.56, 0.49});
    const Eigen::VectorXd rgbnir = vec_from({0.655, 0.560, 0.480, 0.865});
    const Eigen::VectorXd s2_13 = vec_from(
        {0.443, 0.490, 0.56, 0.665, 0.705, 0.740, 0.783, 0.842, 0.865, 0.940, 1.375, 1.61, 2.19});
    const Eigen::VectorXd s2_12 = vec_from(
        {0.443, 0.490, 0.56, 0.665, 0.705, 0.740, 0.783, 0.842, 0.865, 0.940, 1.61, 2.19});
    const Eigen::VectorXd l_toa = vec_from(
        {0.443, 0.482, 0.561, 0.655, 0.865, 1.610, 2.200, 0.590, 1.373, 10.895, 12.005});
    const Eigen::VectorXd l_sr = vec_from({0.443, 0.482, 0.561, 0.655, 0.865, 1.610, 2.200});

    auto sub = [](std::string id, Eigen::VectorXd waves, int classes, double noise, double gsd) {
        SubsetSpec s;
        s.id = std::move(id);
        s.wavelengths = std::move(waves);
        s.num_classes = classes;
        s.noise_rate = noise;
        s.gsd = gsd;
        s.patches = 12;
        s.patch_size = 64;
        return s;
    };
    spec.subsets.push_back(sub("oem", rgb, 8, 0.0, 0.5));
    spec.subsets.push_back(sub("den", rgbnir, 7, 0.0, 3.0));
    spec.subsets.push_back(sub("iran", s2_13, 10, 0.1, 10.0));
    spec.subsets.push_back(sub("ghsl", s2_13, 3, 0.1, 10.0));
    spec.subsets.push_back(sub("wc", s2_12, 11, 0.2, 10.0));
    spec.subsets.push_back(sub("nlcd", l_toa, 12, 0.2, 30.0));
    spec.subsets.push_back(sub("usfs", l_sr, 12, 0.3, 30.0));
    spec.subsets.push_back(sub("sbtn", l_sr, 11, 0.3, 30.0));
    return spec;
}

SyntheticSceneSpec SyntheticSceneSpec::parse_file(const std::filesystem::path& path) {
    Config cfg = Config::parse_file(path);
    SyntheticSceneSpec spec;
    spec.seed = static_cast<uint64_t>(cfg.get_int("scene.seed", 0));
    spec.alignment = static_cast<int>(cfg.get_int("scene.alignment", 32));
    const std::string order = cfg.require_string("scene.subsets");
    std::istringstream in(order);
    std::string id;
    while (std::getline(in, id, ',')) {
        if (id.empty()) continue;
        SubsetSpec s;
        s.id = id;
        const std::string p = "subset." + id + ".";
        s.patches = static_cast<int>(cfg.get_int(p + "patches", 12));
        s.patch_size = static_cast<int>(cfg.get_int(p + "patch_size", 64));
        s.num_classes = static_cast<int>(cfg.get_int(p + "num_classes", 4));
        s.noise_rate = cfg.get_double(p + "noise_rate", 0.0);
        s.gsd = cfg.get_double(p + "gsd", 10.0);
        {
            std::istringstream ws(cfg.require_string(p + "wavelengths"));
            std::vector<double> vals;
            std::string tok;
            while (std::getline(ws, tok, ','))
                if (!tok.empty()) vals.push_back(std::stod(tok));
            s.wavelengths.resize(static_cast<Eigen::Index>(vals.size()));
            for (size_t i = 0; i < vals.size(); ++i)
                s.wavelengths[static_cast<Eigen::Index>(i)] = vals[i];
        }
        if (cfg.has(p + "classes")) {
            std::istringstream cs(cfg.require_string(p + "classes"));
            std::string name;
            while (std::getline(cs, name, ','))
                if (!name.empty()) s.class_names.push_back(name);
        }
        spec.subsets.push_back(std::move(s));
    }
    spec.validate();
    return spec;
}

Config SyntheticSceneSpec::to_config() const {
    Config cfg;
    cfg.set_int("scene.seed", static_cast<long>(seed));
    cfg.set_int("scene.alignment", alignment);
    std::string order;
    for (const auto& s : subsets) {
        if (!order.empty()) order += ",";
        order += s.id;
        const std::string p = "subset." + s.id + ".";
        cfg.set_int(p + "patches", s.patches);
        cfg.set_int(p + "patch_size", s.patch_size);
        cfg.set_int(p + "num_classes", s.num_classes);
        cfg.set_double(p + "noise_rate", s.noise_rate);
        cfg.set_double(p + "gsd", s.gsd);
        std::ostringstream ws;
        ws.precision(17);
        for (Eigen::Index i = 0; i < s.wavelengths.size(); ++i) {
            if (i) ws << ",";
            ws << s.wavelengths[i];
        }
        cfg.set(p + "wavelengths", ws.str());
        if (!s.class_names.empty()) {
            std::string cs;
            for (const auto& n : s.class_names) {
                if (!cs.empty()) cs += ",";
                cs += n;
            }
            cfg.set(p + "classes", cs);
        }
    }
    cfg.set("scene.subsets", order);
    return cfg;
}

LabelMask corrupt_labels(const LabelMask& clean, double rate, uint64_t seed) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ValidationError("corrupt_labels: rate must be in [0,1)");
    if (rate == 0.0) return clean;

    const int h = clean.height(), w = clean.width();
    std::vector<Eigen::Index> valid;
    int32_t max_class = -1;
    for (Eigen::Index p = 0; p < clean.classes.numel(); ++p) {
        if (clean.classes(p) == clean.ignore_value) continue;
        valid.push_back(p);
        max_class = std::max(max_class, clean.classes(p));
    }
    LabelMask out = clean;
    out.quality = LabelQuality::weak;
    out.noise_rate = rate;
    if (valid.empty()) return out;
    const int k = static_cast<int>(max_class) + 1;
    if (k < 2) throw ValidationError("corrupt_labels: need at least 2 classes to corrupt");

    const Eigen::Index target =
        static_cast<Eigen::Index>(std::llround(rate * static_cast<double>(valid.size())));

    // Independent region partition; whole regions flip by a fixed class
    // offset so errors are spatially coherent. The last region is truncated
    // to hit the requested count exactly.
    Rng rng(mix_seed(seed, "corrupt"));
    const int regions = std::max(8, static_cast<int>(clean.classes.numel() / 128));
    std::vector<int> region = voronoi_partition(h, w, regions, rng);
    std::vector<std::vector<Eigen::Index>> members(static_cast<size_t>(regions));
    for (Eigen::Index p : valid) members[static_cast<size_t>(region[static_cast<size_t>(p)])].push_back(p);
    std::vector<int> order(static_cast<size_t>(regions));
    for (int r = 0; r < regions; ++r) order[static_cast<size_t>(r)] = r;
    rng.shuffle(order);

    Eigen::Index flipped = 0;
    for (int r : order) {
        if (flipped >= target) break;
        const auto& px = members[static_cast<size_t>(r)];
        if (px.empty()) continue;
        const int offset = 1 + rng.uniform_int(k - 1);
        for (Eigen::Index p : px) {
            if (flipped >= target) break;
            out.classes(p) = (out.classes(p) + offset) % k;
            ++flipped;
        }
    }
    return out;
}

std::vector<std::string> harmonize_names(const std::vector<std::string>& raw_names) {
    if (raw_names.empty()) throw ValidationError("harmonize_names: empty name list");
    std::vector<std::string> out;
    out.reserve(raw_names.size());
    for (const auto& raw : raw_names) {
        std::string name = lower(raw);
        auto syn = synonym_table().find(name);
        if (syn != synonym_table().end()) {
            out.push_back(syn->second);
            continue;
        }
        // Per-word plural -> singular; connector words kept verbatim.
        std::string result;
        std::string word;
        auto flush = [&]() {
            if (word.empty()) return;
            result += is_connector(word) ? word : singularize_word(word);
            word.clear();
        };
        for (char c : name) {
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '-') {
                word += c;
            } else {
                flush();
                result += c;
            }
        }
        flush();
        out.push_back(result);
    }
    return out;
}

DatasetHandle generate_scene(const SyntheticSceneSpec& spec, const std::filesystem::path& root) {
    spec.validate();
    std::filesystem::create_directories(root);

    std::vector<SubsetInfo> infos;
    for (const auto& sub : spec.subsets) {
        // Taxonomy: explicit class names, or a deterministic draw from the pool.
        ClassTaxonomy tax;
        tax.taxonomy_id = sub.id + "_tax";
        std::vector<int> pool_idx(class_name_pool().size());
        for (size_t i = 0; i < pool_idx.size(); ++i) pool_idx[i] = static_cast<int>(i);
        if (sub.class_names.empty()) {
            Rng trng(mix_seed(spec.seed, sub.id + "/taxonomy"));
            trng.shuffle(pool_idx);
        }
        for (int c = 0; c < sub.num_classes; ++c) {
            ClassInfo info;
            info.id = c;
            if (!sub.class_names.empty()) {
                const std::string& want = sub.class_names[static_cast<size_t>(c)];
                bool found = false;
                for (const auto& entry : class_name_pool()) {
                    if (entry.front() == want) {
                        info.names = entry;
                        found = true;
                        break;
                    }
                }
                if (!found)
                    throw ValidationError("scene spec: class `" + want + "` not in the name pool");
            } else {
                info.names = class_name_pool()[static_cast<size_t>(pool_idx[static_cast<size_t>(c)])];
            }
            info.color = default_class_color(c);
            tax.classes.push_back(std::move(info));
        }
        tax.validate();

        const auto sub_dir = root / sub.id;
        std::filesystem::create_directories(sub_dir / "images");
        std::filesystem::create_directories(sub_dir / "labels");
        if (sub.noise_rate > 0.0) std::filesystem::create_directories(sub_dir / ".clean");
        tax.save(sub_dir / "taxonomy.txt");

        auto emit_patch = [&](int i) {
            PatchPair patch = generate_patch(sub, tax, spec.seed, i);
            char name[16];
            std::snprintf(name, sizeof(name), "%06d.bin", i);
            write_image(sub_dir / "images" / name, patch.image);
            if (sub.noise_rate > 0.0) {
                write_label(sub_dir / ".clean" / name, patch.label);
                LabelMask weak = corrupt_labels(
                    patch.label, sub.noise_rate,
                    mix_seed(spec.seed, sub.id + "/noise/" + std::to_string(i)));
                write_label(sub_dir / "labels" / name, weak);
            } else {
                write_label(sub_dir / "labels" / name, patch.label);
            }
        };
        const int workers = env_workers();
        if (workers <= 1 || sub.patches < 4) {
            for (int i = 0; i < sub.patches; ++i) emit_patch(i);
        } else {
            // Per-patch seeds are derived independently, so output is
            // identical regardless of worker count.
            std::vector<std::thread> pool;
            std::atomic<int> next{0};
            for (int t = 0; t < workers; ++t)
                pool.emplace_back([&]() {
                    for (int i = next.fetch_add(1); i < sub.patches; i = next.fetch_add(1))
                        emit_patch(i);
                });
            for (auto& th : pool) th.join();
        }

        SubsetInfo info;
        info.id = sub.id;
        info.patches = sub.patches;
        info.patch_size = sub.patch_size;
        info.wavelengths = sub.wavelengths;
        info.noise_rate = sub.noise_rate;
        info.quality = sub.noise_rate > 0.0 ? LabelQuality::weak : LabelQuality::exact;
        info.gsd = sub.gsd;
        info.taxonomy = tax;
        infos.push_back(std::move(info));
    }

    DatasetHandle handle = make_dataset_handle(root, std::move(infos), spec.seed);
    auto stats = compute_band_stats(handle);
    for (auto& s : handle.subsets()) {
        s.stat_mean = stats.at(s.id).mean;
        s.stat_stddev = stats.at(s.id).stddev;
    }
    handle.save_manifest();
    return handle;
}

std::map<std::string, BandStats> compute_band_stats(const DatasetHandle& dataset) {
    std::map<std::string, BandStats> out;
    for (const auto& sub : dataset.subsets()) {
        if (sub.patches < 1)
            throw ValidationError("band stats: subset " + sub.id + " is empty");
        const int c = static_cast<int>(sub.wavelengths.size());
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(c);
        Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(c);
        long count = 0;
        for (int i = 0; i < sub.patches; ++i) {
            MultispectralImage img = dataset.load_image(sub.id, i);
            const Eigen::Index hw = static_cast<Eigen::Index>(img.height()) * img.width();
            for (int b = 0; b < c; ++b) {
                auto seg = img.pixels.data.segment(b * hw, hw);
                sum[b] += seg.sum();
                sumsq[b] += seg.square().sum();
            }
            count += hw;
        }
        BandStats st;
        st.mean = sum / static_cast<double>(count);
        // Population std (biased); pinned to avoid cross-implementation drift.
        st.stddev = (sumsq / static_cast<double>(count) - st.mean.array().square().matrix())
                        .array()
                        .max(0.0)
                        .sqrt();
        out[sub.id] = st;
    }
    return out;
}

}  // namespace landseg
