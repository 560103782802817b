#include "qprl/media.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "qprl/rng.hpp"

namespace fs = std::filesystem;

namespace qprl::io {

namespace {

int read_pgm_token(std::istream& in) {
    // skips whitespace and '#' comments
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v;
    in >> v;
    return v;
}

}  // namespace

Grid<float> read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open PGM file: " + path);
    std::string magic(2, '\0');
    in.read(magic.data(), 2);
    if (magic != "P5") throw std::runtime_error("not a binary PGM (P5): " + path);
    int w = read_pgm_token(in);
    int h = read_pgm_token(in);
    int maxval = read_pgm_token(in);
    if (w <= 0 || h <= 0) throw std::runtime_error("bad PGM dimensions: " + path);
    if (maxval != 255) throw std::runtime_error("PGM maxval must be 255: " + path);
    in.get();  // single whitespace after header
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size()))
        throw std::runtime_error("truncated PGM payload: " + path);
    Grid<float> g(h, w);
    for (size_t i = 0; i < buf.size(); ++i) g[i] = static_cast<float>(buf[i]);
    return g;
}

void write_pgm(const std::string& path, const Grid<float>& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write PGM file: " + path);
    out << "P5\n" << image.cols() << " " << image.rows() << "\n255\n";
    std::vector<unsigned char> buf(image.size());
    for (size_t i = 0; i < image.size(); ++i) {
        double v = std::lround(static_cast<double>(image[i]));
        buf[i] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

void write_pgm(const std::string& path, const Frame& frame) {
    Grid<float> g(frame.height, frame.width);
    std::copy(frame.samples.begin(), frame.samples.end(), g.begin());
    write_pgm(path, g);
}

Frame grid_to_frame(const Grid<float>& g, int64_t index) {
    Frame f(g.cols(), g.rows(), index);
    std::copy(g.begin(), g.end(), f.samples.begin());
    return f;
}

namespace {

void check_dims(int w, int h, const std::string& what) {
    if (w <= 0 || h <= 0 || w % kMbSize != 0 || h % kMbSize != 0)
        throw std::runtime_error(what + ": dimensions " + std::to_string(w) + "x" +
                                 std::to_string(h) + " must be positive multiples of 16");
}

std::vector<std::string> sorted_pgm_paths(const std::string& dir) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pgm") paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::runtime_error("no .pgm files in " + dir);
    return paths;
}

}  // namespace

StreamPtr load_stream(const StreamSpec& spec) {
    if (spec.source == StreamSpec::Source::Synthetic)
        return synth_scene(spec.generator, spec.seed, spec.frames, spec.width > 0 ? spec.width : 128,
                           spec.height > 0 ? spec.height : 128, spec.fps);

    auto stream = std::make_shared<LoadedStream>();
    stream->fps = spec.fps;
    if (spec.source == StreamSpec::Source::RawFile) {
        check_dims(spec.width, spec.height, "raw stream " + spec.path);
        std::ifstream in(spec.path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open raw file: " + spec.path);
        in.seekg(0, std::ios::end);
        const int64_t bytes = in.tellg();
        in.seekg(0);
        const int64_t frame_bytes = static_cast<int64_t>(spec.width) * spec.height;
        if (bytes == 0 || bytes % frame_bytes != 0)
            throw std::runtime_error("raw file " + spec.path + " holds " + std::to_string(bytes) +
                                     " bytes, not a multiple of " + std::to_string(frame_bytes) +
                                     " (" + std::to_string(spec.width) + "x" +
                                     std::to_string(spec.height) + ")");
        const int n = static_cast<int>(bytes / frame_bytes);
        std::vector<unsigned char> buf(static_cast<size_t>(frame_bytes));
        for (int t = 0; t < n; ++t) {
            in.read(reinterpret_cast<char*>(buf.data()), frame_bytes);
            Frame f(spec.width, spec.height, t);
            for (size_t i = 0; i < buf.size(); ++i) f.samples[i] = static_cast<float>(buf[i]);
            stream->frames.push_back(std::move(f));
        }
        stream->id = fs::path(spec.path).stem().string();
    } else {  // PgmDir
        auto paths = sorted_pgm_paths(spec.path);
        for (size_t t = 0; t < paths.size(); ++t) {
            Grid<float> g = read_pgm(paths[t]);
            check_dims(g.cols(), g.rows(), paths[t]);
            if (t > 0 && (g.cols() != stream->frames[0].width || g.rows() != stream->frames[0].height))
                throw std::runtime_error("frame dimensions differ inside " + spec.path);
            stream->frames.push_back(grid_to_frame(g, static_cast<int64_t>(t)));
        }
        stream->id = fs::path(spec.path).filename().string();
    }

    if (!spec.saliency_dir.empty()) {
        auto paths = sorted_pgm_paths(spec.saliency_dir);
        if (paths.size() != stream->frames.size())
            throw std::runtime_error("saliency count " + std::to_string(paths.size()) +
                                     " does not match frame count " +
                                     std::to_string(stream->frames.size()));
        for (const auto& p : paths) {
            auto g = read_pgm(p);
            if (g.cols() != stream->frames[0].width || g.rows() != stream->frames[0].height)
                throw std::runtime_error("saliency dimensions differ from frames: " + p);
            stream->saliency.push_back(std::move(g));
        }
    }
    if (!spec.template_dir.empty()) {
        for (const auto& p : sorted_pgm_paths(spec.template_dir))
            stream->templates.push_back(read_pgm(p));
    }
    return stream;
}

// ---------------------------------------------------------------------------
// Synthetic worlds
// ---------------------------------------------------------------------------

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

float quantize_sample(double v) {
    return static_cast<float>(std::clamp<double>(std::lround(v), 0.0, 255.0));
}

struct RoiWorldParams {
    int patch = 32;
    double sigma = 12.0;
    double sal_floor = 0.01;
};

void draw_disc(tasks::Template& t, double cy, double cx, double r, float value) {
    for (int y = 0; y < t.rows(); ++y)
        for (int x = 0; x < t.cols(); ++x) {
            double d = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            if (d <= r * r) t.at(y, x) = value;
        }
}

void box_blur(tasks::Template& t) {
    tasks::Template src = t;
    for (int y = 0; y < t.rows(); ++y)
        for (int x = 0; x < t.cols(); ++x) {
            double sum = 0;
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= t.rows() || xx < 0 || xx >= t.cols()) continue;
                    sum += src.at(yy, xx);
                    ++n;
                }
            t.at(y, x) = static_cast<float>(sum / n);
        }
}

tasks::Template make_car_template(int w, int h, float body, float window) {
    tasks::Template t(h, w, body);
    // cabin
    int cab_h = h / 3;
    for (int y = 1; y < 1 + cab_h; ++y)
        for (int x = w / 4; x < w - w / 4; ++x) t.at(y, x) = window;
    // grille stripes: fine detail that coarse quantization destroys first
    for (int y = 1 + cab_h; y < h - 4; ++y)
        for (int x = 2; x < w - 2; x += 3) t.at(y, x) = static_cast<float>(body * 0.72);
    // bumper stripe
    for (int x = 0; x < w; ++x) t.at(h - 3, x) = static_cast<float>(0.5 * body);
    // wheels
    double r = h / 5.0;
    draw_disc(t, h - 1 - r * 0.5, w * 0.22, r, 20.f);
    draw_disc(t, h - 1 - r * 0.5, w * 0.78, r, 20.f);
    // soften edges so small spatial offsets keep the correlation high
    box_blur(t);
    box_blur(t);
    // compress the palette toward the mean: ZNCC is contrast-invariant, so
    // clean scores are unchanged while quantization erodes the structure at
    // half the step it otherwise would
    double mean = 0;
    for (float v : t) mean += v;
    mean /= static_cast<double>(t.size());
    for (auto& v : t) v = static_cast<float>(mean + 0.5 * (v - mean));
    return t;
}

double mapped_zncc(const tasks::Template& a, const tasks::Template& b) {
    const double n = static_cast<double>(a.size());
    double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        sa += a[i];
        sb += b[i];
        saa += static_cast<double>(a[i]) * a[i];
        sbb += static_cast<double>(b[i]) * b[i];
        sab += static_cast<double>(a[i]) * b[i];
    }
    double va = saa / n - (sa / n) * (sa / n);
    double vb = sbb / n - (sb / n) * (sb / n);
    double cov = sab / n - (sa / n) * (sb / n);
    double denom = std::sqrt(std::max(va, 0.0) * std::max(vb, 0.0));
    if (denom <= 1e-12) return 0.0;
    return 0.5 * (std::clamp(cov / denom, -1.0, 1.0) + 1.0);
}

/// Car-shaped object under a sparse impulse-speckle mask. Impulses spread
/// their energy thinly over the DCT coefficients, so coarse quantizer steps
/// erase the mask and the window correlates like the underlying car again.
/// The speckle amplitude is bisected so the clean detector score lands at
/// `target_score`, keeping the margin below the threshold seed-independent.
tasks::Template make_distractor(const tasks::Template& t, double density, double target_score,
                                Rng& rng) {
    const int h = t.rows(), w = t.cols();
    double mean = 0;
    for (float v : t) mean += v;
    mean /= static_cast<double>(t.size());
    tasks::Template base(h, w);
    Grid<float> speckle(h, w, 0.f);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double a = t.at(y, x) - mean;
            double b = t.at(h - 1 - y, x) - mean;
            base.at(y, x) = static_cast<float>(mean + 0.85 * a + 0.15 * b);
            if (rng.uniform() < density) speckle.at(y, x) = rng.uniform() < 0.5 ? -1.f : 1.f;
        }
    auto compose = [&](double amp) {
        tasks::Template d(h, w);
        for (size_t i = 0; i < d.size(); ++i)
            d[i] = static_cast<float>(std::clamp<double>(base[i] + amp * speckle[i], 0.0, 255.0));
        return d;
    };
    double lo = 0.0, hi = 400.0;
    for (int it = 0; it < 40; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mapped_zncc(compose(mid), t) > target_score) lo = mid;
        else hi = mid;
    }
    return compose(0.5 * (lo + hi));
}

StreamPtr make_roi_world(uint64_t seed, int n_frames, int width, int height, double fps) {
    RoiWorldParams wp;
    auto stream = std::make_shared<LoadedStream>();
    stream->id = "roi_world_" + std::to_string(seed);
    stream->fps = fps;

    Rng rng(seed);
    Rng tex_rng = rng.derive(1);
    Rng traj_rng = rng.derive(2);

    // static periodic texture layers
    Grid<float> tex(height, width);
    for (auto& v : tex) v = static_cast<float>(tex_rng.uniform(-9.0, 9.0));
    const double kx = 1.0 + static_cast<double>(tex_rng.range(1, 3));
    const double ky = 1.0 + static_cast<double>(tex_rng.range(1, 3));
    const double ph1 = tex_rng.uniform(0, kTwoPi), ph2 = tex_rng.uniform(0, kTwoPi);

    // high-detail patch
    Grid<float> patch(wp.patch, wp.patch);
    for (auto& v : patch) v = tex_rng.uniform() < 0.5 ? 58.f : 198.f;

    // trajectory: sinusoids bounded so the saliency support never leaves the frame
    const int sal_r = static_cast<int>(std::ceil(2.5 * wp.sigma));
    const int margin = std::max(wp.patch / 2, sal_r) + 1;
    const double ax_max = std::max(1.0, (width - 1.0) / 2.0 - margin);
    const double ay_max = std::max(1.0, (height - 1.0) / 2.0 - margin);
    const double ax = traj_rng.uniform(0.6 * ax_max, ax_max);
    const double ay = traj_rng.uniform(0.6 * ay_max, ay_max);
    const double tx = traj_rng.uniform(50.0, 110.0), ty = traj_rng.uniform(50.0, 110.0);
    const double px = traj_rng.uniform(0, kTwoPi), py = traj_rng.uniform(0, kTwoPi);
    const double drift_vx = traj_rng.uniform(0.2, 0.5), drift_vy = traj_rng.uniform(0.1, 0.3);

    for (int t = 0; t < n_frames; ++t) {
        Frame f(width, height, t);
        const int dx = static_cast<int>(std::lround(drift_vx * t));
        const int dy = static_cast<int>(std::lround(drift_vy * t));
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                int sx = (x + dx) % width, sy = (y + dy) % height;
                double base = 118.0 +
                              34.0 * std::sin(kTwoPi * kx * sx / width + ph1) *
                                  std::cos(kTwoPi * ky * sy / height + ph2) +
                              tex.at(sy, sx);
                f.at(y, x) = quantize_sample(base);
            }

        const int cx = static_cast<int>(std::lround(width / 2.0 + ax * std::sin(kTwoPi * t / tx + px)));
        const int cy = static_cast<int>(std::lround(height / 2.0 + ay * std::cos(kTwoPi * t / ty + py)));
        const int x0 = cx - wp.patch / 2, y0 = cy - wp.patch / 2;
        for (int y = 0; y < wp.patch; ++y)
            for (int x = 0; x < wp.patch; ++x) f.at(y0 + y, x0 + x) = patch.at(y, x);

        tasks::SaliencyMap sal(height, width, static_cast<float>(wp.sal_floor));
        for (int y = cy - sal_r; y <= cy + sal_r; ++y)
            for (int x = cx - sal_r; x <= cx + sal_r; ++x) {
                double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                if (d2 <= sal_r * sal_r)
                    sal.at(y, x) += static_cast<float>(std::exp(-d2 / (2 * wp.sigma * wp.sigma)));
            }

        stream->frames.push_back(std::move(f));
        stream->saliency.push_back(std::move(sal));
    }
    return stream;
}

double reflect(double v, double lo, double hi) {
    const double range = hi - lo;
    if (range <= 0) return lo;
    double p = std::fmod(v - lo, 2 * range);
    if (p < 0) p += 2 * range;
    return p <= range ? lo + p : hi - (p - range);
}

StreamPtr make_car_world(uint64_t seed, int n_frames, int width, int height, double fps) {
    auto stream = std::make_shared<LoadedStream>();
    stream->id = "car_world_" + std::to_string(seed);
    stream->fps = fps;
    stream->templates = builtin_templates();

    Rng rng(seed);
    Rng tex_rng = rng.derive(11);
    Rng car_rng = rng.derive(12);

    Grid<float> tex(height, width);
    for (auto& v : tex) v = static_cast<float>(tex_rng.uniform(-6.0, 6.0));

    struct Vehicle {
        int tpl;
        double x0, y, vel;
    };
    const int n_cars = 3;
    std::vector<Vehicle> cars;
    for (int i = 0; i < n_cars; ++i) {
        Vehicle v;
        v.tpl = i % static_cast<int>(stream->templates.size());
        const int th = stream->templates[v.tpl].rows();
        double lane = 0.42 + 0.18 * i;
        v.y = std::floor(height * lane) - th / 2;
        v.x0 = car_rng.uniform(8.0, width - 40.0);
        v.vel = (car_rng.uniform() < 0.5 ? -1.0 : 1.0) * car_rng.uniform(0.6, 1.4);
        cars.push_back(v);
    }

    // static noise-masked car-like distractors above the lanes
    struct Distractor {
        tasks::Template img;
        int x, y;
    };
    std::vector<Distractor> distractors;
    {
        const double density[6] = {0.06, 0.09, 0.12, 0.07, 0.10, 0.13};
        const double target[6] = {0.845, 0.835, 0.825, 0.84, 0.83, 0.82};
        for (int i = 0; i < 6; ++i) {
            const auto& tpl = stream->templates[i % stream->templates.size()];
            Distractor d{make_distractor(tpl, density[i], target[i], car_rng), 0, 0};
            const int col = i % 3, row = i / 3;
            const int x_slot = 6 + col * (width - 36 - 12) / 2;
            d.x = x_slot + static_cast<int>(car_rng.range(0, 2)) * 4;
            d.y = (row == 0 ? 3 : 23) + static_cast<int>(car_rng.range(0, 2));
            distractors.push_back(std::move(d));
        }
    }

    // static occluder bar
    const int bar_x = static_cast<int>(width * 0.62), bar_w = 12;

    for (int t = 0; t < n_frames; ++t) {
        Frame f(width, height, t);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                double base = 70.0 + 90.0 * y / height + tex.at(y, x);
                if (y % 24 < 2) base += 25.0;  // lane markings
                f.at(y, x) = quantize_sample(base);
            }

        for (const auto& d : distractors)
            for (int y = 0; y < d.img.rows(); ++y)
                for (int x = 0; x < d.img.cols(); ++x) f.at(d.y + y, d.x + x) = d.img.at(y, x);

        std::vector<tasks::Box> boxes;
        for (const auto& car : cars) {
            const auto& tpl = stream->templates[car.tpl];
            const int tw = tpl.cols(), th = tpl.rows();
            const int x0 = static_cast<int>(
                std::lround(reflect(car.x0 + car.vel * t, 4.0, width - 4.0 - tw)));
            const int y0 = static_cast<int>(car.y);
            for (int y = 0; y < th; ++y)
                for (int x = 0; x < tw; ++x) f.at(y0 + y, x0 + x) = tpl.at(y, x);

            double overlap = std::max(0.0, std::min<double>(x0 + tw, bar_x + bar_w) -
                                               std::max<double>(x0, bar_x));
            double visible = 1.0 - overlap / tw;
            if (visible >= 0.6)
                boxes.push_back({static_cast<double>(x0), static_cast<double>(y0),
                                 static_cast<double>(tw), static_cast<double>(th)});
        }

        for (int y = 0; y < height; ++y)
            for (int x = bar_x; x < bar_x + bar_w; ++x) {
                double v = 35.0 + (y % 8 < 4 ? 12.0 : 0.0) + tex.at(y, x);
                f.at(y, x) = quantize_sample(v);
            }

        stream->frames.push_back(std::move(f));
        stream->truth_boxes.push_back(std::move(boxes));
    }
    return stream;
}

}  // namespace

std::vector<tasks::Template> builtin_templates() {
    std::vector<tasks::Template> bank;
    bank.push_back(make_car_template(24, 16, 205.f, 95.f));
    bank.push_back(make_car_template(28, 18, 165.f, 60.f));
    bank.push_back(make_car_template(20, 14, 230.f, 120.f));
    return bank;
}

StreamPtr synth_scene(WorldKind kind, uint64_t seed, int n_frames, int width, int height,
                      double fps) {
    check_dims(width, height, "synthetic scene");
    if (n_frames < 1) throw std::runtime_error("synthetic scene needs at least one frame");
    switch (kind) {
        case WorldKind::RoiWorld:
            return make_roi_world(seed, n_frames, width, height, fps);
        case WorldKind::CarWorld:
            return make_car_world(seed, n_frames, width, height, fps);
    }
    throw std::logic_error("unknown world kind");
}

}  // namespace qprl::io
