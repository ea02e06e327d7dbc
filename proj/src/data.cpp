#include "sign/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sign/error.hpp"

namespace sign {

namespace {

// Empirical normalization of 2D point clouds; returns the applied shift/scale.
void normalize_empirical(Dataset& ds) {
    ds.shift = column_mean(ds.samples);
    ds.scale = column_std(ds.samples);
    const std::size_t d = ds.samples.cols();
    for (std::size_t r = 0; r < ds.samples.rows(); ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            ds.samples(r, c) = (ds.samples(r, c) - ds.shift[c]) / ds.scale[c];
        }
    }
}

Dataset mixture_dataset(const DatasetSpec& spec, Rng& rng) {
    GaussianMixture gm = GaussianMixture::parse(spec.mixture);
    const std::size_t d = gm.dim();
    std::vector<double> shift(d, 0.0);
    double scale = 1.0;
    if (spec.normalize) {
        shift = gm.mean();
        const auto var = gm.variance();
        double total = 0.0;
        for (double v : var) total += v;
        scale = std::sqrt(total / static_cast<double>(d));
        if (!(scale > 0.0)) throw ConfigError("mixture has zero variance");
        for (double v : var) {
            const double s = std::sqrt(v) / scale;
            if (s < 0.9 || s > 1.1) {
                throw ConfigError("mixture '" + spec.mixture +
                                  "' is too anisotropic for a single normalization scale");
            }
        }
        gm = gm.normalized(shift, scale);
    }
    Dataset ds;
    ds.samples = gm.sample(spec.count, rng);
    ds.mixture = gm;
    ds.shift = shift;
    ds.scale.assign(d, scale);
    return ds;
}

Dataset two_moons(const DatasetSpec& spec, Rng& rng) {
    Dataset ds;
    ds.samples = Tensor({spec.count, 2});
    for (std::size_t r = 0; r < spec.count; ++r) {
        const double th = std::numbers::pi * rng.uniform();
        const bool upper = rng.uniform() < 0.5;
        const double x = upper ? std::cos(th) : 1.0 - std::cos(th);
        const double y = upper ? std::sin(th) : 0.5 - std::sin(th);
        ds.samples(r, 0) = x + spec.jitter * rng.normal();
        ds.samples(r, 1) = y + spec.jitter * rng.normal();
    }
    return ds;
}

Dataset rings(const DatasetSpec& spec, Rng& rng) {
    Dataset ds;
    ds.samples = Tensor({spec.count, 2});
    for (std::size_t r = 0; r < spec.count; ++r) {
        const double th = 2.0 * std::numbers::pi * rng.uniform();
        const double radius = rng.uniform() < 0.5 ? 1.0 : 2.0;
        ds.samples(r, 0) = radius * std::cos(th) + spec.jitter * rng.normal();
        ds.samples(r, 1) = radius * std::sin(th) + spec.jitter * rng.normal();
    }
    return ds;
}

// 4x4 board on [-2, 2)^2, points kept where floor(x) + floor(y) is even.
Dataset checkerboard(const DatasetSpec& spec, Rng& rng) {
    Dataset ds;
    ds.samples = Tensor({spec.count, 2});
    std::size_t r = 0;
    while (r < spec.count) {
        const double x = -2.0 + 4.0 * rng.uniform();
        const double y = -2.0 + 4.0 * rng.uniform();
        const auto ix = static_cast<long>(std::floor(x));
        const auto iy = static_cast<long>(std::floor(y));
        if (((ix + iy) % 2 + 2) % 2 != 0) continue;
        ds.samples(r, 0) = x;
        ds.samples(r, 1) = y;
        ++r;
    }
    return ds;
}

// Oriented stripe patterns, one per template, plus isotropic pixel noise.
Dataset toy_images(const DatasetSpec& spec, Rng& rng) {
    const std::size_t side = spec.image_size;
    const std::size_t K = spec.templates;
    if (side == 0 || K == 0) throw ConfigError("toy_images needs image_size >= 1 and templates >= 1");
    if (!(spec.pixel_noise > 0.0)) throw ConfigError("toy_images needs pixel_noise > 0");
    const std::size_t d = side * side;
    Tensor means({K, d});
    for (std::size_t k = 0; k < K; ++k) {
        const double angle = std::numbers::pi * (static_cast<double>(k) + rng.uniform()) / static_cast<double>(K);
        const double freq = 0.6 + 0.8 * rng.uniform();
        const double phase = 2.0 * std::numbers::pi * rng.uniform();
        for (std::size_t i = 0; i < side; ++i) {
            for (std::size_t j = 0; j < side; ++j) {
                const double u = std::cos(angle) * static_cast<double>(j) + std::sin(angle) * static_cast<double>(i);
                means(k, i * side + j) = 0.8 * std::tanh(2.0 * std::sin(freq * u + phase));
            }
        }
    }
    GaussianMixture gm(std::vector<double>(K, 1.0 / static_cast<double>(K)), means,
                       std::vector<double>(K, spec.pixel_noise));
    Dataset ds;
    ds.samples = gm.sample(spec.count, rng);
    ds.mixture = gm;
    ds.shift.assign(d, 0.0);
    ds.scale.assign(d, 1.0);
    ds.height = ds.width = side;
    return ds;
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    if (offset + 4 > bytes.size()) {
        throw FormatError("IDX header truncated at byte " + std::to_string(bytes.size()), bytes.size());
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

const char* to_string(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::gaussian_mixture: return "gaussian_mixture";
        case DatasetKind::two_moons: return "two_moons";
        case DatasetKind::checkerboard2d: return "checkerboard2d";
        case DatasetKind::rings: return "rings";
        case DatasetKind::toy_images: return "toy_images";
        case DatasetKind::idx_images: return "idx_images";
    }
    return "?";
}

DatasetKind parse_dataset_kind(const std::string& name) {
    for (auto k : {DatasetKind::gaussian_mixture, DatasetKind::two_moons, DatasetKind::checkerboard2d,
                   DatasetKind::rings, DatasetKind::toy_images, DatasetKind::idx_images}) {
        if (name == to_string(k)) return k;
    }
    throw ConfigError("unknown dataset kind '" + name + "'");
}

Dataset generate(const DatasetSpec& spec, Rng& rng) {
    if (spec.count == 0) throw ConfigError("dataset count must be at least 1");
    Dataset ds;
    switch (spec.kind) {
        case DatasetKind::gaussian_mixture: return mixture_dataset(spec, rng);
        case DatasetKind::toy_images: return toy_images(spec, rng);
        case DatasetKind::idx_images: {
            IdxImages idx = load_idx(spec.images_path, spec.labels_path);
            ds.samples = std::move(idx.images);
            if (spec.count < ds.samples.rows()) {
                std::vector<std::size_t> keep(spec.count);
                for (std::size_t i = 0; i < spec.count; ++i) keep[i] = i;
                ds.samples = diff::gather_rows(ds.samples, keep);
                if (!idx.labels.empty()) idx.labels.resize(spec.count);
            }
            ds.height = idx.rows;
            ds.width = idx.cols;
            ds.labels = std::move(idx.labels);
            ds.shift.assign(ds.samples.cols(), 0.0);
            ds.scale.assign(ds.samples.cols(), 1.0);
            return ds;
        }
        case DatasetKind::two_moons: ds = two_moons(spec, rng); break;
        case DatasetKind::checkerboard2d: ds = checkerboard(spec, rng); break;
        case DatasetKind::rings: ds = rings(spec, rng); break;
    }
    if (spec.normalize) {
        normalize_empirical(ds);
    } else {
        ds.shift.assign(ds.samples.cols(), 0.0);
        ds.scale.assign(ds.samples.cols(), 1.0);
    }
    return ds;
}

std::vector<double> column_mean(const Tensor& x) {
    const std::size_t d = x.cols();
    std::vector<double> m(d, 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < d; ++c) m[c] += x(r, c);
    }
    for (double& v : m) v /= static_cast<double>(x.rows());
    return m;
}

std::vector<double> column_std(const Tensor& x) {
    const auto m = column_mean(x);
    const std::size_t d = x.cols();
    std::vector<double> s(d, 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            const double e = x(r, c) - m[c];
            s[c] += e * e;
        }
    }
    for (double& v : s) v = std::sqrt(v / static_cast<double>(x.rows()));
    return s;
}

IdxImages parse_idx(std::span<const std::uint8_t> image_bytes,
                    std::optional<std::span<const std::uint8_t>> label_bytes) {
    const std::uint32_t magic = read_be32(image_bytes, 0);
    if (magic != kIdxImageMagic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "bad IDX image magic 0x%08x", magic);
        throw FormatError(buf, 0);
    }
    const std::size_t count = read_be32(image_bytes, 4);
    const std::size_t rows = read_be32(image_bytes, 8);
    const std::size_t cols = read_be32(image_bytes, 12);
    const std::size_t header = 16;
    const std::size_t pixels = rows * cols;
    const std::size_t need = header + count * pixels;
    if (image_bytes.size() < need) {
        throw FormatError("IDX image payload truncated at byte " + std::to_string(image_bytes.size()) +
                              " (expected " + std::to_string(need) + ")",
                          image_bytes.size());
    }
    IdxImages out;
    out.rows = rows;
    out.cols = cols;
    out.images = Tensor({count, pixels});
    for (std::size_t i = 0; i < count * pixels; ++i) {
        out.images[i] = 2.0 * (static_cast<double>(image_bytes[header + i]) / 255.0) - 1.0;
    }
    if (label_bytes) {
        const auto lb = *label_bytes;
        const std::uint32_t lmagic = read_be32(lb, 0);
        if (lmagic != kIdxLabelMagic) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "bad IDX label magic 0x%08x", lmagic);
            throw FormatError(buf, 0);
        }
        const std::size_t lcount = read_be32(lb, 4);
        if (lcount != count) throw DataError("IDX label count does not match image count");
        if (lb.size() < 8 + lcount) {
            throw FormatError("IDX label payload truncated at byte " + std::to_string(lb.size()), lb.size());
        }
        out.labels.assign(lb.begin() + 8, lb.begin() + 8 + static_cast<std::ptrdiff_t>(lcount));
    }
    return out;
}

IdxImages load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto images = read_file(images_path);
    if (labels_path.empty()) return parse_idx(images);
    const auto labels = read_file(labels_path);
    return parse_idx(images, std::span<const std::uint8_t>(labels));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
}

void write_text(const std::string& path, const std::string& text) {
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const std::string& path) {
    const auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

std::string samples_to_csv(const Tensor& x, bool with_id) {
    std::string out;
    const std::size_t d = x.cols();
    if (with_id) out += "id,";
    for (std::size_t c = 0; c < d; ++c) {
        if (c) out += ',';
        out += "x" + std::to_string(c);
    }
    out += '\n';
    for (std::size_t r = 0; r < x.rows(); ++r) {
        if (with_id) out += std::to_string(r) + ",";
        for (std::size_t c = 0; c < d; ++c) {
            if (c) out += ',';
            out += format_double(x(r, c));
        }
        out += '\n';
    }
    return out;
}

void save_samples(const std::string& path, const Tensor& x, bool with_id) {
    write_text(path, samples_to_csv(x, with_id));
}

Tensor parse_samples(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::size_t> columns;  // positions of x<k> columns, ordered by k
    std::size_t width = 0;
    if (!std::getline(in, line)) throw FormatError("empty CSV", 1);
    ++line_no;
    {
        std::vector<std::pair<std::size_t, std::size_t>> found;  // (k, position)
        std::istringstream hs(line);
        std::string cell;
        std::size_t pos = 0;
        while (std::getline(hs, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            if (cell.size() >= 2 && cell[0] == 'x' &&
                std::all_of(cell.begin() + 1, cell.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
                found.emplace_back(std::stoul(cell.substr(1)), pos);
            }
            ++pos;
        }
        width = pos;
        std::sort(found.begin(), found.end());
        for (std::size_t i = 0; i < found.size(); ++i) {
            if (found[i].first != i) throw FormatError("CSV header lacks column x" + std::to_string(i), 1);
            columns.push_back(found[i].second);
        }
        if (columns.empty()) throw FormatError("CSV header has no x<k> columns", 1);
    }
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            const std::string cell = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            errno = 0;
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (cell.empty() || end == cell.c_str() || *end != '\0' || errno == ERANGE) {
                throw FormatError("malformed CSV value '" + cell + "' on line " + std::to_string(line_no), line_no);
            }
            cells.push_back(v);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (cells.size() != width) {
            throw FormatError("CSV line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                                  " fields, expected " + std::to_string(width),
                              line_no);
        }
        for (std::size_t c : columns) values.push_back(cells[c]);
        ++rows;
    }
    return Tensor({rows, columns.size()}, std::move(values));
}

Tensor load_samples(const std::string& path) { return parse_samples(read_text(path)); }

std::vector<std::uint8_t> to_pgm(const Tensor& images, std::size_t height, std::size_t width,
                                 std::size_t grid_cols) {
    if (height * width != images.cols()) throw DimensionError("PGM image shape does not match row width");
    const std::size_t count = images.rows();
    if (grid_cols == 0) grid_cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(count))));
    grid_cols = std::max<std::size_t>(1, std::min(grid_cols, count));
    const std::size_t grid_rows = (count + grid_cols - 1) / grid_cols;
    const std::size_t W = grid_cols * width;
    const std::size_t H = grid_rows * height;
    const std::string header = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const std::size_t base = out.size();
    out.resize(base + W * H, 0);
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t gy = k / grid_cols;
        const std::size_t gx = k % grid_cols;
        for (std::size_t i = 0; i < height; ++i) {
            for (std::size_t j = 0; j < width; ++j) {
                const double v = std::clamp(images(k, i * width + j), -1.0, 1.0);
                const auto p = static_cast<std::uint8_t>(std::lround((v + 1.0) * 0.5 * 255.0));
                out[base + (gy * height + i) * W + gx * width + j] = p;
            }
        }
    }
    return out;
}

void save_pgm(const std::string& path, const Tensor& images, std::size_t height, std::size_t width,
              std::size_t grid_cols) {
    write_file(path, to_pgm(images, height, width, grid_cols));
}

Tensor sample_rows(const Tensor& data, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(count);
    for (auto& i : idx) i = rng.integer(0, data.rows() - 1);
    return diff::gather_rows(data, idx);
}

}  // namespace sign
