#ifndef SPAE_DATA_HPP
#define SPAE_DATA_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "spae/sparse_tensor.hpp"

namespace spae {

struct StrokeSample {
    int label = 0;
    std::vector<std::vector<std::array<double, 2>>> strokes; // polylines in source units
};

struct PointCloudSample {
    int d = 3;
    std::vector<std::vector<double>> points;   // n x d
    std::vector<std::vector<double>> features; // empty or n rows
    std::vector<int> labels;                   // empty or n entries (-1 = unlabeled)
};

/// Canonical stroke text: one sample per line,
/// `<label>;<x,y> <x,y> ...|<x,y> ...` with strokes separated by `|`.
std::vector<StrokeSample> parse_strokes(const std::string& text);
std::string format_strokes(const std::vector<StrokeSample>& samples);

/// UCI pendigits rows (16 comma-separated coordinates + class) to stroke
/// samples with one 8-point trajectory each.
std::vector<StrokeSample> convert_pendigits(const std::string& text);

/// Scales the sample aspect-preserving into [0,grid)^2 and draws each
/// polyline with an 8-connected integer line; single channel of 1.0 at
/// visited cells. Samples whose points all coincide land on one center cell.
SparseTensor rasterize(const StrokeSample& sample, int grid);

struct AffineConfig {
    double rotate_deg = 15.0;      // max |angle|
    bool full_circle = false;      // scenes: uniform rotation in the horizontal plane
    double scale_min = 0.85;
    double scale_max = 1.15;
    double shear = 0.0;
    double translate_frac = 0.10;  // of the sample extent

    bool is_identity() const {
        return rotate_deg == 0.0 && !full_circle && scale_min == 1.0 && scale_max == 1.0 &&
               shear == 0.0 && translate_frac == 0.0;
    }
};

/// Deterministic given (config, seed); labels unchanged. The 2D transform
/// rotates/scales/shears about the bounding-box center; the point-cloud
/// variant rotates the first two axes only (horizontal plane).
StrokeSample random_affine(const StrokeSample& sample, const AffineConfig& cfg, uint64_t seed);
PointCloudSample random_affine(const PointCloudSample& sample, const AffineConfig& cfg,
                               uint64_t seed);

/// The deterministic transform random_affine draws parameters for:
/// p' = R(theta) * Shear(shear) * (p - center) * scale + center + t.
StrokeSample apply_affine(const StrokeSample& sample, double theta, double scale, double shear,
                          double tx, double ty);

struct VoxelizeResult {
    SparseTensor tensor;
    std::vector<int> site_labels;    // majority vote per active row (-1 where unlabeled)
    std::vector<int32_t> point_cell; // active row index per input point
};

/// Bins points to lattice cells of the given edge length; features averaged
/// per cell, labels by majority vote (ties to the smallest id).
VoxelizeResult voxelize(const PointCloudSample& sample, double resolution, int d);

enum class SynthStyle { Polyline, Shell, Random };

struct SynthSample {
    SparseTensor tensor;
    std::vector<int> site_labels;
};

/// Deterministic sparse structure generator for tests and desk-scale runs.
SynthSample synth_sparse(int d, int size, SynthStyle style, uint64_t seed,
                         double occupancy = 0.10);

/// Procedural 10-class handwriting-like trajectories (digit templates with
/// random affine distortion and jitter); the desk-scale stand-in for pen
/// stroke corpora.
StrokeSample synth_digit(int digit, uint64_t seed);
std::vector<StrokeSample> synth_digit_corpus(int count, uint64_t seed);

/// Point-cloud text format: header `d n_points n_features`, then one line
/// per point: coordinates, features, label (-1 when unlabeled).
std::string format_pointcloud(const PointCloudSample& sample);
PointCloudSample parse_pointcloud(const std::string& text);

// splittable seed stream for per-sample determinism
uint64_t mix_seed(uint64_t seed, uint64_t index);

} // namespace spae

#endif
