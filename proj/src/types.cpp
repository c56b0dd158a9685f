#include "landseg/core/types.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace landseg {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    return out;
}

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void ClassTaxonomy::validate() const {
    if (classes.empty()) throw ValidationError("taxonomy: no classes");
    std::set<std::string> seen;
    for (size_t i = 0; i < classes.size(); ++i) {
        if (classes[i].id != static_cast<int>(i))
            throw ValidationError("taxonomy: class ids must be contiguous from 0");
        if (classes[i].names.empty())
            throw ValidationError("taxonomy: every class needs at least one name variant");
        for (const auto& n : classes[i].names) {
            if (n.empty()) throw ValidationError("taxonomy: empty name variant");
            if (!seen.insert(n).second)
                throw ValidationError("taxonomy: name variant `" + n + "` appears twice");
        }
    }
}

ClassTaxonomy ClassTaxonomy::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open taxonomy file: " + path.string());
    ClassTaxonomy tax;
    tax.taxonomy_id = path.stem().string();
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = strip(line);
        if (s.empty() || s[0] == '#') continue;
        if (s.rfind("taxonomy_id", 0) == 0) {
            auto parts = split(s, '\t');
            if (parts.size() == 2) tax.taxonomy_id = strip(parts[1]);
            continue;
        }
        auto fields = split(s, '\t');
        if (fields.size() < 2)
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": expected `class_id<TAB>variant;variant;...`");
        ClassInfo info;
        try {
            info.id = std::stoi(fields[0]);
        } catch (const std::exception&) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                                  ": bad class id `" + fields[0] + "`");
        }
        for (auto& v : split(fields[1], ';')) {
            std::string name = strip(v);
            if (!name.empty()) info.names.push_back(name);
        }
        if (fields.size() >= 3) {
            std::string c = strip(fields[2]);
            if (c.size() == 7 && c[0] == '#') {
                auto hex = [&](int off) {
                    return static_cast<uint8_t>(std::stoi(c.substr(static_cast<size_t>(off), 2), nullptr, 16));
                };
                info.color = std::array<uint8_t, 3>{hex(1), hex(3), hex(5)};
            }
        }
        tax.classes.push_back(std::move(info));
    }
    tax.validate();
    return tax;
}

void ClassTaxonomy::save(const std::filesystem::path& path) const {
    validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write taxonomy file: " + path.string());
    out << "taxonomy_id\t" << taxonomy_id << "\n";
    for (const auto& c : classes) {
        out << c.id << "\t";
        for (size_t i = 0; i < c.names.size(); ++i) {
            if (i) out << ";";
            out << c.names[i];
        }
        if (c.color) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "#%02X%02X%02X", (*c.color)[0], (*c.color)[1],
                          (*c.color)[2]);
            out << "\t" << buf;
        }
        out << "\n";
    }
}

ProbabilityStack ProbabilityStack::from_probs(TensorD probs, std::string taxonomy_id) {
    if (probs.rank() != 3) throw ValidationError("probstack: probs must be [K,H,W]");
    ProbabilityStack s;
    s.probs = std::move(probs);
    s.taxonomy_id = std::move(taxonomy_id);
    s.recompute_confidences();
    return s;
}

void ProbabilityStack::recompute_confidences() {
    const int k = num_classes();
    class_confidences.resize(k);
    for (int c = 0; c < k; ++c) class_confidences[c] = probs.plane(c).maxCoeff();
}

void ProbabilityStack::validate(double tol) const {
    const int k = num_classes();
    const Eigen::Index hw = static_cast<Eigen::Index>(height()) * width();
    for (Eigen::Index p = 0; p < hw; ++p) {
        double sum = 0.0;
        for (int c = 0; c < k; ++c) {
            double v = probs.data[c * hw + p];
            if (v < -tol) throw ValidationError("probstack: negative probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > tol)
            throw ValidationError("probstack: per-pixel probabilities must sum to 1");
    }
}

TensorI ProbabilityStack::argmax_labels() const {
    const int k = num_classes();
    const Eigen::Index hw = static_cast<Eigen::Index>(height()) * width();
    TensorI out({height(), width()});
    for (Eigen::Index p = 0; p < hw; ++p) {
        int best = 0;
        double bv = probs.data[p];
        for (int c = 1; c < k; ++c) {
            double v = probs.data[c * hw + p];
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        out(p) = best;
    }
    return out;
}

}  // namespace landseg
