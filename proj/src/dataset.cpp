#include "landseg/data/dataset.hpp"

#include <sstream>

#include "landseg/core/config.hpp"
#include "landseg/core/container.hpp"

namespace landseg {

namespace {

std::string join_csv(const Eigen::VectorXd& v) {
    std::ostringstream ss;
    ss.precision(17);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) ss << ",";
        ss << v[i];
    }
    return ss.str();
}

Eigen::VectorXd parse_csv(const std::string& s) {
    std::vector<double> vals;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (!tok.empty()) vals.push_back(std::stod(tok));
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(vals.size()));
    for (size_t i = 0; i < vals.size(); ++i) v[static_cast<Eigen::Index>(i)] = vals[i];
    return v;
}

std::string index_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d.bin", index);
    return buf;
}

}  // namespace

DatasetHandle make_dataset_handle(const std::filesystem::path& root,
                                  std::vector<SubsetInfo> subsets, uint64_t seed) {
    DatasetHandle h;
    h.root_ = root;
    h.subsets_ = std::move(subsets);
    h.seed = seed;
    return h;
}

DatasetHandle DatasetHandle::open(const std::filesystem::path& root) {
    const auto manifest_path = root / "manifest";
    if (!std::filesystem::exists(manifest_path))
        throw IoError("no manifest in dataset directory: " + root.string());
    Config m = Config::parse_file(manifest_path);

    DatasetHandle h;
    h.root_ = root;
    h.seed = static_cast<uint64_t>(m.get_int("dataset.seed", 0));
    std::istringstream order(m.require_string("subset.order"));
    std::string id;
    while (std::getline(order, id, ',')) {
        if (id.empty()) continue;
        SubsetInfo s;
        s.id = id;
        const std::string p = "subset." + id + ".";
        s.patches = static_cast<int>(m.get_int(p + "patches", 0));
        s.patch_size = static_cast<int>(m.get_int(p + "patch_size", 0));
        s.wavelengths = parse_csv(m.require_string(p + "wavelengths"));
        s.noise_rate = m.get_double(p + "noise_rate", 0.0);
        s.quality = m.get_string(p + "quality", "exact") == "weak" ? LabelQuality::weak
                                                                   : LabelQuality::exact;
        s.gsd = m.get_double(p + "gsd", 10.0);
        s.taxonomy = ClassTaxonomy::load(root / m.require_string(p + "taxonomy"));
        if (m.has(p + "stats.mean")) {
            s.stat_mean = parse_csv(m.require_string(p + "stats.mean"));
            s.stat_stddev = parse_csv(m.require_string(p + "stats.std"));
        }
        h.subsets_.push_back(std::move(s));
    }
    if (h.subsets_.empty()) throw IoError("manifest lists no subsets: " + root.string());
    return h;
}

const SubsetInfo& DatasetHandle::subset(const std::string& id) const {
    for (const auto& s : subsets_)
        if (s.id == id) return s;
    throw ValidationError("no such subset: " + id);
}

std::filesystem::path DatasetHandle::image_path(const std::string& subset_id, int index) const {
    return root_ / subset_id / "images" / index_name(index);
}

std::filesystem::path DatasetHandle::label_path(const std::string& subset_id, int index,
                                                bool clean) const {
    if (clean) {
        auto p = root_ / subset_id / ".clean" / index_name(index);
        if (std::filesystem::exists(p)) return p;
    }
    return root_ / subset_id / "labels" / index_name(index);
}

MultispectralImage DatasetHandle::load_image(const std::string& subset_id, int index) const {
    return read_image(image_path(subset_id, index));
}

LabelMask DatasetHandle::load_label(const std::string& subset_id, int index, bool clean) const {
    return read_label(label_path(subset_id, index, clean));
}

void DatasetHandle::save_manifest() const {
    Config m;
    m.set_int("dataset.version", 1);
    m.set_int("dataset.seed", static_cast<long>(seed));
    m.set_int("dataset.num_subsets", static_cast<long>(subsets_.size()));
    std::string order;
    for (const auto& s : subsets_) {
        if (!order.empty()) order += ",";
        order += s.id;
        const std::string p = "subset." + s.id + ".";
        m.set_int(p + "patches", s.patches);
        m.set_int(p + "patch_size", s.patch_size);
        m.set_int(p + "bands", static_cast<long>(s.wavelengths.size()));
        m.set(p + "wavelengths", join_csv(s.wavelengths));
        m.set_double(p + "noise_rate", s.noise_rate);
        m.set(p + "quality", s.quality == LabelQuality::weak ? "weak" : "exact");
        m.set_double(p + "gsd", s.gsd);
        m.set(p + "taxonomy", s.id + "/taxonomy.txt");
        if (s.stat_mean.size() > 0) {
            m.set(p + "stats.mean", join_csv(s.stat_mean));
            m.set(p + "stats.std", join_csv(s.stat_stddev));
        }
    }
    m.set("subset.order", order);
    m.save(root_ / "manifest");
}

}  // namespace landseg
