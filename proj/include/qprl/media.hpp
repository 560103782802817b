#pragma once

#include <memory>
#include <string>
#include <vector>

#include "qprl/frame.hpp"
#include "qprl/tasks.hpp"

namespace qprl::io {

/// A fully decoded input stream plus optional task-side data.
struct LoadedStream {
    std::string id;
    double fps = 30.0;
    std::vector<Frame> frames;
    std::vector<tasks::SaliencyMap> saliency;          // empty or one per frame
    std::vector<std::vector<tasks::Box>> truth_boxes;  // synthetic car_world only
    std::vector<tasks::Template> templates;            // detection template bank
};

using StreamPtr = std::shared_ptr<const LoadedStream>;

enum class WorldKind { RoiWorld, CarWorld };

struct StreamSpec {
    enum class Source { RawFile, PgmDir, Synthetic };
    Source source = Source::Synthetic;

    // RawFile / PgmDir
    std::string path;
    int width = 0, height = 0;  // required for RawFile

    // Synthetic
    WorldKind generator = WorldKind::RoiWorld;
    uint64_t seed = 1;
    int frames = 300;

    double fps = 30.0;
    std::string saliency_dir;  // optional aligned PGM saliency maps
    std::string template_dir;  // optional PGM template bank
};

/// PGM (P5, maxval 255) helpers. Values are rounded to the nearest integer
/// and clamped to [0,255] on write.
Grid<float> read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Grid<float>& image);
void write_pgm(const std::string& path, const Frame& frame);

Frame grid_to_frame(const Grid<float>& g, int64_t index);

/// Decodes a stream according to the spec; throws descriptive errors on
/// missing files, byte-count mismatches or non-multiple-of-16 dimensions.
StreamPtr load_stream(const StreamSpec& spec);

/// Deterministic synthetic scenes.
/// roi_world: textured drifting background plus a high-detail moving patch;
/// saliency is a fixed-shape bump centered on the patch.
/// car_world: road-like background with template-stamped vehicles moving at
/// constant velocity behind a static occluder; emits ground-truth boxes.
StreamPtr synth_scene(WorldKind kind, uint64_t seed, int n_frames, int width, int height,
                      double fps = 30.0);

/// The car_world template bank (also used for detection on car_world streams).
std::vector<tasks::Template> builtin_templates();

}  // namespace qprl::io
