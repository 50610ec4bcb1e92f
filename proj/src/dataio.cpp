#include "imdp/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "imdp/image_io.hpp"
#include "imdp/noise_views.hpp"

namespace fs = std::filesystem;

namespace imdp::dataio {

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

Tensor preprocess_image(const Tensor& image_hwc, const PreprocessConfig& cfg, Tensor& valid) {
    check_or<DimensionMismatch>(image_hwc.rank() == 3 && image_hwc.dim(2) == 3,
                                "preprocess: (H,W,3) input required");
    int h = image_hwc.dim(0), w = image_hwc.dim(1), s = cfg.size;
    check_or<ConfigError>(h <= s && w <= s,
                          "image larger than the configured size; resize upstream");
    Tensor out({3, s, s}, cfg.pad_value);
    valid = Tensor({s, s});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                int src_c = cfg.bgr_to_rgb ? 2 - c : c;
                out.at(c, y, x) =
                    (image_hwc.at(y, x, src_c) - cfg.mean[c]) / cfg.stddev[c];
            }
            valid.at(y, x) = 1.0;
        }
    return out;
}

Preprocessed preprocess(const ImageSample& sample, const PreprocessConfig& cfg) {
    Preprocessed out;
    out.orig_h = sample.height();
    out.orig_w = sample.width();
    out.image = preprocess_image(sample.image(), cfg, out.valid);
    int s = cfg.size;
    out.gt = Tensor::full({s, s}, kIgnoreValue);
    const auto& mask = sample.mask();
    for (int y = 0; y < out.orig_h; ++y)
        for (int x = 0; x < out.orig_w; ++x)
            out.gt.at(y, x) = mask.has_value() ? (*mask).at(y, x) : 0.0;
    return out;
}

Tensor unpreprocess(const Tensor& image_chw, const PreprocessConfig& cfg, int orig_h, int orig_w) {
    check_or<DimensionMismatch>(image_chw.rank() == 3 && image_chw.dim(0) == 3,
                                "unpreprocess: (3,S,S) input required");
    Tensor out({orig_h, orig_w, 3});
    for (int y = 0; y < orig_h; ++y)
        for (int x = 0; x < orig_w; ++x)
            for (int c = 0; c < 3; ++c) {
                int dst_c = cfg.bgr_to_rgb ? 2 - c : c;
                out.at(y, x, dst_c) = image_chw.at(c, y, x) * cfg.stddev[c] + cfg.mean[c];
            }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

ImageSample flip_h(const ImageSample& sample) {
    int h = sample.height(), w = sample.width();
    Tensor img({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = sample.image().at(y, w - 1 - x, c);
    std::optional<Tensor> mask;
    if (sample.mask_unchecked().has_value()) {
        Tensor m({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) m.at(y, x) = sample.mask_unchecked()->at(y, w - 1 - x);
        mask = std::move(m);
    }
    return ImageSample(sample.id(), std::move(img), std::move(mask), sample.label_unchecked());
}

ImageSample crop(const ImageSample& sample, int x0, int y0, int w, int h) {
    check_or<DimensionMismatch>(w > 0 && h > 0 && x0 >= 0 && y0 >= 0 &&
                                    x0 + w <= sample.width() && y0 + h <= sample.height(),
                                "crop outside image");
    Tensor img({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = sample.image().at(y0 + y, x0 + x, c);
    std::optional<Tensor> mask;
    int label = sample.label_unchecked();
    if (sample.mask_unchecked().has_value()) {
        Tensor m({h, w});
        bool any = false;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                m.at(y, x) = sample.mask_unchecked()->at(y0 + y, x0 + x);
                any = any || m.at(y, x) != 0.0;
            }
        mask = std::move(m);
        label = any ? 1 : 0;  // crop may remove every tampered pixel
    }
    return ImageSample(sample.id(), std::move(img), std::move(mask), label);
}

ImageSample augment(const ImageSample& sample, Rng& rng, const AugmentConfig& cfg) {
    ImageSample out = sample;
    if (rng.bernoulli(cfg.flip_prob)) out = flip_h(out);
    int h = out.height(), w = out.width();
    int ch = std::max(1, static_cast<int>(std::lround(
                             h * rng.uniform(cfg.min_crop_fraction, 1.0))));
    int cw = std::max(1, static_cast<int>(std::lround(
                             w * rng.uniform(cfg.min_crop_fraction, 1.0))));
    int y0 = static_cast<int>(rng.uniform_int(0, h - ch));
    int x0 = static_cast<int>(rng.uniform_int(0, w - cw));
    return crop(out, x0, y0, cw, ch);
}

// ---------------------------------------------------------------------------
// Synthetic tampering
// ---------------------------------------------------------------------------

ImageSample paste_region(const ImageSample& host, const ImageSample& donor, int src_x, int src_y,
                         int w, int h, int dst_x, int dst_y, RegionShape shape,
                         const std::string& id) {
    check_or<RegionTooLarge>(w > 0 && h > 0, "pasted region has zero area");
    check_or<RegionTooLarge>(src_x >= 0 && src_y >= 0 && src_x + w <= donor.width() &&
                                 src_y + h <= donor.height(),
                             "source region outside donor");
    check_or<RegionTooLarge>(dst_x >= 0 && dst_y >= 0 && dst_x + w <= host.width() &&
                                 dst_y + h <= host.height(),
                             "destination region outside host");
    Tensor img = host.image();
    Tensor mask({host.height(), host.width()});
    double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    double ry = std::max(0.5, h / 2.0), rx = std::max(0.5, w / 2.0);
    bool any = false;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (shape == RegionShape::Ellipse) {
                double dy = (y - cy) / ry, dx = (x - cx) / rx;
                if (dy * dy + dx * dx > 1.0) continue;
            }
            for (int c = 0; c < 3; ++c)
                img.at(dst_y + y, dst_x + x, c) = donor.image().at(src_y + y, src_x + x, c);
            mask.at(dst_y + y, dst_x + x) = 1.0;
            any = true;
        }
    check_or<RegionTooLarge>(any, "pasted region covered no pixels");
    return ImageSample(id, std::move(img), std::move(mask), 1);
}

ImageSample synthesize_splice(const ImageSample& host, const ImageSample& donor, Rng& rng) {
    int hh = host.height(), hw = host.width();
    int w = static_cast<int>(rng.uniform_int(std::max(2, hw / 8), std::max(3, hw / 3)));
    int h = static_cast<int>(rng.uniform_int(std::max(2, hh / 8), std::max(3, hh / 3)));
    w = std::min(w, std::min(hw, donor.width()));
    h = std::min(h, std::min(hh, donor.height()));
    int src_x = static_cast<int>(rng.uniform_int(0, donor.width() - w));
    int src_y = static_cast<int>(rng.uniform_int(0, donor.height() - h));
    int dst_x = static_cast<int>(rng.uniform_int(0, hw - w));
    int dst_y = static_cast<int>(rng.uniform_int(0, hh - h));
    RegionShape shape = rng.bernoulli(0.5) ? RegionShape::Rectangle : RegionShape::Ellipse;
    return paste_region(host, donor, src_x, src_y, w, h, dst_x, dst_y, shape, host.id());
}

ImageSample generate_authentic(Rng& rng, int h, int w, const std::string& id) {
    // Bilinear color field between four random corners + sinusoidal texture
    // + per-pixel noise, quantized to integers.
    double corners[4][3];
    for (auto& corner : corners)
        for (double& v : corner) v = rng.uniform(30.0, 225.0);
    double fy = rng.uniform(1.0, 4.0), fx = rng.uniform(1.0, 4.0);
    double phase = rng.uniform(0.0, 6.28), amp = rng.uniform(4.0, 14.0);
    double noise_amp = rng.uniform(1.0, 4.0);
    Tensor img({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
            double u = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
            double tex = amp * std::sin(6.28318 * (fy * v + fx * u) + phase);
            for (int c = 0; c < 3; ++c) {
                double base = (1 - v) * ((1 - u) * corners[0][c] + u * corners[1][c]) +
                              v * ((1 - u) * corners[2][c] + u * corners[3][c]);
                double val = base + tex + rng.normal(0.0, noise_amp);
                img.at(y, x, c) = std::min(255.0, std::max(0.0, std::round(val)));
            }
        }
    return ImageSample(id, std::move(img), std::nullopt, 0);
}

// ---------------------------------------------------------------------------
// Degradations
// ---------------------------------------------------------------------------

DegradationSpec DegradationSpec::jpeg(int quality) {
    for (int q : kJpegGrid)
        if (q == quality) return {Kind::Jpeg, quality};
    throw ConfigError("jpeg quality not in the declared grid");
}

DegradationSpec DegradationSpec::blur(int kernel) {
    for (int k : kBlurGrid)
        if (k == kernel) return {Kind::Blur, kernel};
    throw ConfigError("blur kernel not in the declared grid");
}

std::string DegradationSpec::name() const {
    std::ostringstream os;
    os << (kind == Kind::Jpeg ? "jpeg" : "blur") << "_" << level;
    return os.str();
}

namespace {

int mirror(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        if (n == 1) return 0;
    }
    return i;
}

Tensor gaussian_blur(const Tensor& hwc, int ksize) {
    int h = hwc.dim(0), w = hwc.dim(1);
    double sigma = 0.3 * ((ksize - 1) * 0.5 - 1.0) + 0.8;
    int r = ksize / 2;
    std::vector<double> kern(static_cast<std::size_t>(ksize));
    double sum = 0.0;
    for (int i = 0; i < ksize; ++i) {
        double d = i - r;
        kern[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += kern[static_cast<std::size_t>(i)];
    }
    for (double& v : kern) v /= sum;

    Tensor tmp({h, w, 3}), out({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = 0; t < ksize; ++t)
                    acc += kern[static_cast<std::size_t>(t)] * hwc.at(y, mirror(x - r + t, w), c);
                tmp.at(y, x, c) = acc;
            }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int t = 0; t < ksize; ++t)
                    acc += kern[static_cast<std::size_t>(t)] * tmp.at(mirror(y - r + t, h), x, c);
                out.at(y, x, c) = acc;
            }
    return out;
}

}  // namespace

Tensor degrade(const Tensor& image_hwc, const DegradationSpec& spec) {
    if (spec.identity()) return image_hwc;
    if (spec.kind == DegradationSpec::Kind::Jpeg)
        return io::to_tensor(io::jpeg_roundtrip(io::to_u8(image_hwc), spec.level));
    return gaussian_blur(image_hwc, spec.level);
}

// ---------------------------------------------------------------------------
// Dataset I/O
// ---------------------------------------------------------------------------

namespace {

struct LabelRow {
    std::string id;
    int label;
    std::string kind;
};

std::vector<LabelRow> read_labels(const std::string& root) {
    std::ifstream in(root + "/labels.csv");
    check_or<DataError>(in.good(), "cannot open labels.csv under " + root);
    std::vector<LabelRow> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream ls(line);
        LabelRow row;
        std::string label_str;
        check_or<DataError>(static_cast<bool>(std::getline(ls, row.id, ',')) &&
                                static_cast<bool>(std::getline(ls, label_str, ',')),
                            "malformed labels.csv row: " + line);
        std::getline(ls, row.kind, ',');
        row.label = std::stoi(label_str);
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(),
              [](const LabelRow& a, const LabelRow& b) { return a.id < b.id; });
    return rows;
}

// Storage order is BGR (the order the normalization constants were derived
// for); PNG files are RGB, so loading and saving swap channels.
Tensor png_to_storage(const io::ImageU8& img) {
    Tensor t({img.h, img.w, 3});
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) t.at(y, x, c) = static_cast<double>(img.at(y, x, 2 - c));
    return t;
}

io::ImageU8 storage_to_png(const Tensor& hwc) {
    io::ImageU8 img;
    img.h = hwc.dim(0);
    img.w = hwc.dim(1);
    img.rgb.resize(hwc.size());
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = std::lround(std::min(255.0, std::max(0.0, hwc.at(y, x, 2 - c))));
                img.rgb[(static_cast<std::size_t>(y) * img.w + x) * 3 + c] =
                    static_cast<std::uint8_t>(v);
            }
    return img;
}

}  // namespace

std::vector<ImageSample> load_dataset(const std::string& root) {
    auto rows = read_labels(root);
    check_or<EmptyDataset>(!rows.empty(), "dataset has no samples: " + root);
    std::vector<ImageSample> samples;
    samples.reserve(rows.size());
    for (const LabelRow& row : rows) {
        std::string img_path = root + "/images/" + row.id + ".png";
        Tensor img = png_to_storage(io::read_png(img_path));
        int h = img.dim(0), w = img.dim(1);

        std::string mask_path = root + "/masks/" + row.id + ".png";
        std::optional<Tensor> mask;
        if (fs::exists(mask_path)) {
            int mh = 0, mw = 0;
            auto gray = io::read_png_gray(mask_path, mh, mw);
            check_or<DimensionMismatch>(mh == h && mw == w,
                                        "mask dims differ from image: " + row.id);
            Tensor m({h, w});
            for (std::size_t i = 0; i < gray.size(); ++i) m[i] = gray[i] >= 128 ? 1.0 : 0.0;
            mask = std::move(m);
        } else {
            check_or<MissingMask>(row.label == 0,
                                  "label-1 sample without mask file: " + row.id);
            mask = Tensor({h, w});  // authentic: all-zero
        }
        samples.push_back(
            validate_sample(ImageSample(row.id, std::move(img), std::move(mask), row.label)));
    }
    return samples;
}

std::vector<std::string> load_kinds(const std::string& root) {
    std::vector<std::string> kinds;
    for (const auto& row : read_labels(root)) kinds.push_back(row.kind);
    return kinds;
}

void write_dataset(const std::string& root, const std::vector<ImageSample>& samples,
                   const std::vector<std::string>& kinds) {
    check_or<DataError>(kinds.size() == samples.size(), "kinds list does not match samples");
    fs::create_directories(root + "/images");
    fs::create_directories(root + "/masks");
    std::ofstream labels(root + "/labels.csv");
    check_or<DataError>(labels.good(), "cannot write labels.csv under " + root);
    labels << "id,label,kind\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const ImageSample& s = samples[i];
        io::write_png(root + "/images/" + s.id() + ".png", storage_to_png(s.image()));
        if (s.label_unchecked() == 1) {
            const Tensor& m = *s.mask_unchecked();
            std::vector<std::uint8_t> gray(m.size());
            for (std::size_t j = 0; j < m.size(); ++j) gray[j] = m[j] != 0.0 ? 255 : 0;
            io::write_png_gray(root + "/masks/" + s.id() + ".png", s.height(), s.width(), gray);
        }
        labels << s.id() << "," << s.label_unchecked() << "," << kinds[i] << "\n";
    }
}

SyntheticDataset make_synthetic(const std::vector<ImageSample>& authentic, int n,
                                std::uint64_t seed) {
    check_or<DataError>(authentic.size() >= 2, "need at least 2 authentic images");
    RngFactory factory(seed);
    SyntheticDataset out;
    char id_buf[32];
    for (int i = 0; i < n; ++i) {
        std::snprintf(id_buf, sizeof(id_buf), "tampered_%04d", i);
        Rng rng = factory.stream(id_buf);
        std::size_t host_idx = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(authentic.size()) - 1));
        bool copy_move = i % 2 == 1;
        std::size_t donor_idx = host_idx;
        if (!copy_move) {
            donor_idx = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(authentic.size()) - 2));
            if (donor_idx >= host_idx) ++donor_idx;
        }
        ImageSample s = synthesize_splice(authentic[host_idx], authentic[donor_idx], rng);
        out.samples.emplace_back(id_buf, s.image(), *s.mask_unchecked(), 1);
        out.kinds.push_back(copy_move ? "cpmv" : "spli");
    }
    for (int i = 0; i < n; ++i) {  // n authentic copies, cycling the pool
        std::snprintf(id_buf, sizeof(id_buf), "authentic_%04d", i);
        const ImageSample& src = authentic[static_cast<std::size_t>(i) % authentic.size()];
        out.samples.emplace_back(id_buf, src.image(), std::nullopt, 0);
        out.kinds.push_back("auth");
    }
    return out;
}

}  // namespace imdp::dataio
