#include "landseg/core/container.hpp"

#include <cstring>
#include <fstream>

namespace landseg {

namespace {

constexpr char kMagic[4] = {'L', 'S', 'G', 'C'};
constexpr uint16_t kVersion = 1;

enum class Dtype : uint8_t { f32 = 1, f64 = 2, i32 = 3 };

void put(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void put_pod(std::ostream& out, T v) {
    put(out, &v, sizeof(T));
}

void put_str(std::ostream& out, const std::string& s) {
    put_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
    put(out, s.data(), s.size());
}

void get(std::istream& in, void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw IoError("container: truncated file");
}

template <class T>
T get_pod(std::istream& in) {
    T v;
    get(in, &v, sizeof(T));
    return v;
}

std::string get_str(std::istream& in) {
    uint32_t n = get_pod<uint32_t>(in);
    std::string s(n, '\0');
    if (n) get(in, s.data(), n);
    return s;
}

struct Header {
    ContainerKind kind;
    Dtype dtype;
    std::vector<int> dims;
};

void write_header(std::ostream& out, ContainerKind kind, Dtype dtype,
                  const std::vector<int>& dims) {
    put(out, kMagic, 4);
    put_pod<uint16_t>(out, kVersion);
    put_pod<uint8_t>(out, static_cast<uint8_t>(kind));
    put_pod<uint8_t>(out, static_cast<uint8_t>(dtype));
    put_pod<uint32_t>(out, static_cast<uint32_t>(dims.size()));
    for (int d : dims) put_pod<uint64_t>(out, static_cast<uint64_t>(d));
}

Header read_header(std::istream& in, const std::string& path) {
    char magic[4];
    get(in, magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("container: bad magic in " + path);
    uint16_t version = get_pod<uint16_t>(in);
    if (version != kVersion)
        throw IoError("container: unsupported version " + std::to_string(version) + " in " + path);
    Header h;
    h.kind = static_cast<ContainerKind>(get_pod<uint8_t>(in));
    h.dtype = static_cast<Dtype>(get_pod<uint8_t>(in));
    uint32_t ndim = get_pod<uint32_t>(in);
    if (ndim > 8) throw IoError("container: implausible rank in " + path);
    for (uint32_t i = 0; i < ndim; ++i)
        h.dims.push_back(static_cast<int>(get_pod<uint64_t>(in)));
    return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

}  // namespace

void write_image(const std::filesystem::path& path, const MultispectralImage& img) {
    img.validate();
    auto out = open_out(path);
    write_header(out, ContainerKind::image, Dtype::f32,
                 {img.channels(), img.height(), img.width()});
    put_pod<uint32_t>(out, static_cast<uint32_t>(img.wavelengths.size()));
    for (Eigen::Index i = 0; i < img.wavelengths.size(); ++i)
        put_pod<double>(out, img.wavelengths[i]);
    put_pod<double>(out, img.gsd);
    put_str(out, img.subset_id);
    std::vector<float> buf(static_cast<size_t>(img.pixels.numel()));
    for (Eigen::Index i = 0; i < img.pixels.numel(); ++i)
        buf[static_cast<size_t>(i)] = static_cast<float>(img.pixels(i));
    put(out, buf.data(), buf.size() * sizeof(float));
}

MultispectralImage read_image(const std::filesystem::path& path) {
    auto in = open_in(path);
    Header h = read_header(in, path.string());
    if (h.kind != ContainerKind::image || h.dtype != Dtype::f32 || h.dims.size() != 3)
        throw IoError("container: not an image file: " + path.string());
    MultispectralImage img;
    uint32_t nw = get_pod<uint32_t>(in);
    img.wavelengths.resize(nw);
    for (uint32_t i = 0; i < nw; ++i) img.wavelengths[i] = get_pod<double>(in);
    img.gsd = get_pod<double>(in);
    img.subset_id = get_str(in);
    img.pixels = TensorD(h.dims);
    std::vector<float> buf(static_cast<size_t>(img.pixels.numel()));
    get(in, buf.data(), buf.size() * sizeof(float));
    for (Eigen::Index i = 0; i < img.pixels.numel(); ++i)
        img.pixels(i) = static_cast<double>(buf[static_cast<size_t>(i)]);
    img.validate();
    return img;
}

void write_label(const std::filesystem::path& path, const LabelMask& mask) {
    auto out = open_out(path);
    write_header(out, ContainerKind::label, Dtype::i32, {mask.height(), mask.width()});
    put_pod<int32_t>(out, mask.ignore_value);
    put_pod<uint8_t>(out, static_cast<uint8_t>(mask.quality));
    put_pod<double>(out, mask.noise_rate);
    put_str(out, mask.taxonomy_id);
    put(out, mask.classes.data.data(), static_cast<size_t>(mask.classes.numel()) * sizeof(int32_t));
}

LabelMask read_label(const std::filesystem::path& path) {
    auto in = open_in(path);
    Header h = read_header(in, path.string());
    if (h.kind != ContainerKind::label || h.dtype != Dtype::i32 || h.dims.size() != 2)
        throw IoError("container: not a label file: " + path.string());
    LabelMask mask;
    mask.ignore_value = get_pod<int32_t>(in);
    mask.quality = static_cast<LabelQuality>(get_pod<uint8_t>(in));
    mask.noise_rate = get_pod<double>(in);
    mask.taxonomy_id = get_str(in);
    mask.classes = TensorI(h.dims);
    get(in, mask.classes.data.data(), static_cast<size_t>(mask.classes.numel()) * sizeof(int32_t));
    return mask;
}

void write_probstack(const std::filesystem::path& path, const ProbabilityStack& stack) {
    auto out = open_out(path);
    write_header(out, ContainerKind::probstack, Dtype::f64,
                 {stack.num_classes(), stack.height(), stack.width()});
    put_str(out, stack.taxonomy_id);
    put(out, stack.probs.data.data(), static_cast<size_t>(stack.probs.numel()) * sizeof(double));
}

ProbabilityStack read_probstack(const std::filesystem::path& path) {
    auto in = open_in(path);
    Header h = read_header(in, path.string());
    if (h.kind != ContainerKind::probstack || h.dtype != Dtype::f64 || h.dims.size() != 3)
        throw IoError("container: not a probability stack file: " + path.string());
    std::string tax = get_str(in);
    TensorD probs(h.dims);
    get(in, probs.data.data(), static_cast<size_t>(probs.numel()) * sizeof(double));
    return ProbabilityStack::from_probs(std::move(probs), std::move(tax));
}

ContainerKind peek_kind(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_header(in, path.string()).kind;
}

}  // namespace landseg
