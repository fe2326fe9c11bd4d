#include "spae/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace spae {

namespace {

std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r\n"));
    auto e = s.find_last_not_of(" \t\r\n");
    s.erase(e == std::string::npos ? 0 : e + 1);
    return s;
}

[[noreturn]] void parse_fail(int line, const std::string& what) {
    fail(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + what);
}

double parse_real(const std::string& tok, int line) {
    try {
        size_t used = 0;
        double v = std::stod(tok, &used);
        if (used != tok.size()) parse_fail(line, "trailing characters in number '" + tok + "'");
        return v;
    } catch (const Error&) {
        throw;
    } catch (...) {
        parse_fail(line, "bad number '" + tok + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

uint64_t mix_seed(uint64_t seed, uint64_t index) {
    // splitmix64 over the combined word
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::vector<StrokeSample> parse_strokes(const std::string& text) {
    std::vector<StrokeSample> samples;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        auto semi = line.find(';');
        if (semi == std::string::npos) parse_fail(line_no, "missing ';' after label");
        StrokeSample sample;
        try {
            sample.label = std::stoi(line.substr(0, semi));
        } catch (...) {
            parse_fail(line_no, "bad label '" + line.substr(0, semi) + "'");
        }
        for (const std::string& stroke_txt : split(line.substr(semi + 1), '|')) {
            std::vector<std::array<double, 2>> stroke;
            std::istringstream ss(stroke_txt);
            std::string pt;
            while (ss >> pt) {
                auto xy = split(pt, ',');
                if (xy.size() != 2) parse_fail(line_no, "point '" + pt + "' is not 'x,y'");
                stroke.push_back({parse_real(xy[0], line_no), parse_real(xy[1], line_no)});
            }
            if (stroke.empty()) parse_fail(line_no, "empty stroke segment");
            sample.strokes.push_back(std::move(stroke));
        }
        if (sample.strokes.empty()) parse_fail(line_no, "sample has no strokes");
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::string format_strokes(const std::vector<StrokeSample>& samples) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& s : samples) {
        os << s.label << ";";
        for (size_t i = 0; i < s.strokes.size(); ++i) {
            if (i) os << "|";
            for (size_t p = 0; p < s.strokes[i].size(); ++p) {
                if (p) os << " ";
                os << s.strokes[i][p][0] << "," << s.strokes[i][p][1];
            }
        }
        os << "\n";
    }
    return os.str();
}

std::vector<StrokeSample> convert_pendigits(const std::string& text) {
    std::vector<StrokeSample> samples;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        auto toks = split(line, ',');
        if (toks.size() != 17) parse_fail(line_no, "expected 16 coordinates and a class label");
        StrokeSample s;
        std::vector<std::array<double, 2>> stroke;
        for (int i = 0; i < 8; ++i) {
            stroke.push_back({parse_real(trim(toks[2 * i]), line_no),
                              parse_real(trim(toks[2 * i + 1]), line_no)});
        }
        try {
            s.label = std::stoi(trim(toks[16]));
        } catch (...) {
            parse_fail(line_no, "bad class label");
        }
        s.strokes.push_back(std::move(stroke));
        samples.push_back(std::move(s));
    }
    return samples;
}

namespace {

// 8-connected integer line from a to b, inclusive
void draw_line(std::set<std::pair<int32_t, int32_t>>& cells, int32_t x0, int32_t y0, int32_t x1,
               int32_t y1) {
    const int32_t dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    const int32_t dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int32_t err = dx + dy;
    while (true) {
        cells.insert({x0, y0});
        if (x0 == x1 && y0 == y1) break;
        const int32_t e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

} // namespace

SparseTensor rasterize(const StrokeSample& sample, int grid) {
    check(grid >= 8, ErrorCode::BadGeometry, "rasterization grid must be at least 8");
    size_t n_points = 0;
    for (const auto& s : sample.strokes) n_points += s.size();
    check(n_points > 0, ErrorCode::DegenerateSample, "sample has no points");

    double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
    for (const auto& s : sample.strokes) {
        for (const auto& p : s) {
            min_x = std::min(min_x, p[0]);
            max_x = std::max(max_x, p[0]);
            min_y = std::min(min_y, p[1]);
            max_y = std::max(max_y, p[1]);
        }
    }
    const double extent = std::max(max_x - min_x, max_y - min_y);
    const double cx = (min_x + max_x) / 2, cy = (min_y + max_y) / 2;
    const double half = (grid - 1) / 2.0;
    const double s = extent > 0 ? (grid - 1) / extent : 0.0;

    auto to_cell = [&](const std::array<double, 2>& p) {
        int32_t x = static_cast<int32_t>(std::lround((p[0] - cx) * s + half));
        int32_t y = static_cast<int32_t>(std::lround((p[1] - cy) * s + half));
        x = std::clamp<int32_t>(x, 0, grid - 1);
        y = std::clamp<int32_t>(y, 0, grid - 1);
        return std::pair<int32_t, int32_t>(x, y);
    };

    std::set<std::pair<int32_t, int32_t>> cells;
    for (const auto& stroke : sample.strokes) {
        auto prev = to_cell(stroke[0]);
        cells.insert(prev);
        for (size_t i = 1; i < stroke.size(); ++i) {
            auto cur = to_cell(stroke[i]);
            draw_line(cells, prev.first, prev.second, cur.first, cur.second);
            prev = cur;
        }
    }

    std::vector<std::pair<Coord, std::vector<real>>> sites;
    sites.reserve(cells.size());
    for (const auto& [x, y] : cells) {
        sites.push_back({make_coord(0, {x, y}), {real(1)}});
    }
    std::array<int32_t, kMaxDim> size{};
    size[0] = grid;
    size[1] = grid;
    return build_sparse(2, size, 1, sites, 1);
}

StrokeSample apply_affine(const StrokeSample& sample, double theta, double scale, double shear,
                          double tx, double ty) {
    double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
    for (const auto& s : sample.strokes) {
        for (const auto& p : s) {
            min_x = std::min(min_x, p[0]);
            max_x = std::max(max_x, p[0]);
            min_y = std::min(min_y, p[1]);
            max_y = std::max(max_y, p[1]);
        }
    }
    const double cx = (min_x + max_x) / 2, cy = (min_y + max_y) / 2;
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);

    StrokeSample out;
    out.label = sample.label;
    out.strokes.reserve(sample.strokes.size());
    for (const auto& stroke : sample.strokes) {
        std::vector<std::array<double, 2>> s2;
        s2.reserve(stroke.size());
        for (const auto& p : stroke) {
            double x = (p[0] - cx) * scale;
            double y = (p[1] - cy) * scale;
            x += shear * y;
            const double xr = cos_t * x - sin_t * y;
            const double yr = sin_t * x + cos_t * y;
            s2.push_back({xr + cx + tx, yr + cy + ty});
        }
        out.strokes.push_back(std::move(s2));
    }
    return out;
}

StrokeSample random_affine(const StrokeSample& sample, const AffineConfig& cfg, uint64_t seed) {
    if (cfg.is_identity()) return sample;
    std::mt19937_64 rng(seed);
    const double deg2rad = 3.14159265358979323846 / 180.0;
    std::uniform_real_distribution<double> angle_d(-cfg.rotate_deg * deg2rad,
                                                   cfg.rotate_deg * deg2rad);
    std::uniform_real_distribution<double> scale_d(cfg.scale_min, cfg.scale_max);
    std::uniform_real_distribution<double> shear_d(-cfg.shear, cfg.shear);
    const double theta = angle_d(rng);
    const double sc = scale_d(rng);
    const double sh = shear_d(rng);

    double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
    for (const auto& s : sample.strokes) {
        for (const auto& p : s) {
            min_x = std::min(min_x, p[0]);
            max_x = std::max(max_x, p[0]);
            min_y = std::min(min_y, p[1]);
            max_y = std::max(max_y, p[1]);
        }
    }
    const double extent = std::max(max_x - min_x, max_y - min_y);
    std::uniform_real_distribution<double> trans_d(-cfg.translate_frac * extent,
                                                   cfg.translate_frac * extent);
    const double tx = trans_d(rng), ty = trans_d(rng);
    return apply_affine(sample, theta, sc, sh, tx, ty);
}

PointCloudSample random_affine(const PointCloudSample& sample, const AffineConfig& cfg,
                               uint64_t seed) {
    if (cfg.is_identity()) return sample;
    std::mt19937_64 rng(seed);
    const double pi = 3.14159265358979323846;
    const double max_angle = cfg.full_circle ? pi : cfg.rotate_deg * pi / 180.0;
    std::uniform_real_distribution<double> angle_d(-max_angle, max_angle);
    std::uniform_real_distribution<double> scale_d(cfg.scale_min, cfg.scale_max);
    const double theta = angle_d(rng);
    const double sc = scale_d(rng);

    const int d = sample.d;
    std::vector<double> lo(d, 1e300), hi(d, -1e300);
    for (const auto& p : sample.points) {
        for (int i = 0; i < d; ++i) {
            lo[i] = std::min(lo[i], p[i]);
            hi[i] = std::max(hi[i], p[i]);
        }
    }
    double extent = 0;
    for (int i = 0; i < d; ++i) extent = std::max(extent, hi[i] - lo[i]);
    std::uniform_real_distribution<double> trans_d(-cfg.translate_frac * extent,
                                                   cfg.translate_frac * extent);
    std::vector<double> t(d), c(d);
    for (int i = 0; i < d; ++i) t[i] = trans_d(rng);
    for (int i = 0; i < d; ++i) c[i] = (lo[i] + hi[i]) / 2;

    const double cos_t = std::cos(theta), sin_t = std::sin(theta);
    PointCloudSample out = sample;
    for (auto& p : out.points) {
        std::vector<double> q(d);
        for (int i = 0; i < d; ++i) q[i] = (p[i] - c[i]) * sc;
        // rotation confined to the horizontal plane (first two axes)
        const double x = cos_t * q[0] - sin_t * q[1];
        const double y = sin_t * q[0] + cos_t * q[1];
        q[0] = x;
        q[1] = y;
        for (int i = 0; i < d; ++i) p[i] = q[i] + c[i] + t[i];
    }
    return out;
}

VoxelizeResult voxelize(const PointCloudSample& sample, double resolution, int d) {
    check(!sample.points.empty(), ErrorCode::EmptyCloud, "cannot voxelize an empty point cloud");
    check(resolution > 0, ErrorCode::BadGeometry, "voxel resolution must be positive");
    check(d >= 2 && d <= kMaxDim, ErrorCode::DimensionMismatch, "voxel dimension must be 2..4");
    check(sample.d >= d, ErrorCode::DimensionMismatch, "sample has fewer coordinates than d");
    const bool has_feats = !sample.features.empty();
    const bool has_labels = !sample.labels.empty();
    const int n_feat = has_feats ? static_cast<int>(sample.features.front().size()) : 1;

    std::vector<std::array<int32_t, kMaxDim>> cells(sample.points.size());
    std::array<int64_t, kMaxDim> lo{}, hi{};
    lo.fill(INT64_MAX);
    hi.fill(INT64_MIN);
    for (size_t p = 0; p < sample.points.size(); ++p) {
        for (int i = 0; i < d; ++i) {
            const int64_t cell = static_cast<int64_t>(std::floor(sample.points[p][i] / resolution));
            cells[p][i] = static_cast<int32_t>(cell);
            lo[i] = std::min(lo[i], cell);
            hi[i] = std::max(hi[i], cell);
        }
    }
    std::array<int32_t, kMaxDim> size{};
    for (int i = 0; i < d; ++i) size[i] = static_cast<int32_t>(hi[i] - lo[i] + 1);
    for (int i = d; i < kMaxDim; ++i) size[i] = 0;

    struct Acc {
        std::vector<real> sum;
        int count = 0;
        std::map<int, int> votes;
    };
    std::unordered_map<Coord, Acc, CoordHash> acc;
    for (size_t p = 0; p < sample.points.size(); ++p) {
        Coord c;
        c.batch = 0;
        for (int i = 0; i < d; ++i) c.pos[i] = static_cast<int32_t>(cells[p][i] - lo[i]);
        auto [it, fresh] = acc.try_emplace(c);
        if (fresh) it->second.sum.assign(n_feat, real(0));
        if (has_feats) {
            check(static_cast<int>(sample.features[p].size()) == n_feat,
                  ErrorCode::DimensionMismatch, "ragged per-point feature rows");
            for (int i = 0; i < n_feat; ++i) it->second.sum[i] += static_cast<real>(sample.features[p][i]);
        } else {
            it->second.sum[0] += real(1);
        }
        it->second.count++;
        if (has_labels) it->second.votes[sample.labels[p]]++;
    }

    std::vector<std::pair<Coord, std::vector<real>>> sites;
    sites.reserve(acc.size());
    for (const auto& [c, a] : acc) {
        std::vector<real> feat(a.sum);
        for (real& v : feat) v /= static_cast<real>(a.count);
        sites.push_back({c, std::move(feat)});
    }
    VoxelizeResult result;
    result.tensor = build_sparse(d, size, n_feat, sites, 1);

    result.site_labels.assign(static_cast<size_t>(result.tensor.active()), -1);
    if (has_labels) {
        for (const auto& [c, a] : acc) {
            int best = -1, best_count = -1;
            for (const auto& [label, count] : a.votes) { // std::map: smallest id wins ties
                if (count > best_count) {
                    best = label;
                    best_count = count;
                }
            }
            result.site_labels[result.tensor.row_of(c)] = best;
        }
    }
    result.point_cell.resize(sample.points.size());
    for (size_t p = 0; p < sample.points.size(); ++p) {
        Coord c;
        c.batch = 0;
        for (int i = 0; i < d; ++i) c.pos[i] = static_cast<int32_t>(cells[p][i] - lo[i]);
        result.point_cell[p] = result.tensor.row_of(c);
    }
    return result;
}

namespace {

// d-dimensional digital line: steps along the dominant axis, rounding the rest
void draw_line_nd(std::set<std::vector<int32_t>>& cells, const std::vector<int32_t>& a,
                  const std::vector<int32_t>& b) {
    const int d = static_cast<int>(a.size());
    int32_t steps = 0;
    for (int i = 0; i < d; ++i) steps = std::max(steps, std::abs(b[i] - a[i]));
    for (int32_t t = 0; t <= steps; ++t) {
        std::vector<int32_t> p(d);
        for (int i = 0; i < d; ++i) {
            const double f = steps == 0 ? 0.0 : static_cast<double>(t) / steps;
            p[i] = static_cast<int32_t>(std::lround(a[i] + f * (b[i] - a[i])));
        }
        cells.insert(p);
    }
}

} // namespace

SynthSample synth_sparse(int d, int size, SynthStyle style, uint64_t seed, double occupancy) {
    check(d >= 2 && d <= kMaxDim, ErrorCode::DimensionMismatch, "synth dimension must be 2..4");
    check(size >= 4, ErrorCode::BadGeometry, "synth size must be at least 4");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int32_t> coord_d(0, size - 1);

    int64_t volume = 1;
    for (int i = 0; i < d; ++i) volume *= size;
    const auto target = static_cast<int64_t>(occupancy * static_cast<double>(volume));

    std::map<std::vector<int32_t>, int> labeled; // cell -> label, ordered for determinism
    if (style == SynthStyle::Polyline) {
        int polyline = 0;
        while (static_cast<int64_t>(labeled.size()) < std::max<int64_t>(target, 1)) {
            std::set<std::vector<int32_t>> cells;
            std::vector<int32_t> prev(d);
            for (int i = 0; i < d; ++i) prev[i] = coord_d(rng);
            for (int w = 0; w < 3; ++w) {
                std::vector<int32_t> next(d);
                for (int i = 0; i < d; ++i) next[i] = coord_d(rng);
                draw_line_nd(cells, prev, next);
                prev = next;
            }
            for (const auto& c : cells) labeled.try_emplace(c, polyline);
            ++polyline;
        }
    } else if (style == SynthStyle::Shell) {
        int shell = 0;
        while (static_cast<int64_t>(labeled.size()) < std::max<int64_t>(target, 1)) {
            std::vector<int32_t> lo(d), hi(d);
            for (int i = 0; i < d; ++i) {
                int32_t a = coord_d(rng), b = coord_d(rng);
                lo[i] = std::min(a, b);
                hi[i] = std::max(a, b);
                if (hi[i] - lo[i] < 2) hi[i] = std::min<int32_t>(size - 1, lo[i] + 2);
            }
            // walk the box, keep boundary sites
            std::vector<int32_t> p = lo;
            while (true) {
                bool boundary = false;
                for (int i = 0; i < d; ++i) boundary = boundary || p[i] == lo[i] || p[i] == hi[i];
                if (boundary) labeled.try_emplace(p, shell);
                int i = d - 1;
                for (; i >= 0; --i) {
                    if (++p[i] <= hi[i]) break;
                    p[i] = lo[i];
                }
                if (i < 0) break;
            }
            ++shell;
        }
    } else {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<int32_t> p(d, 0);
        while (true) {
            if (u(rng) < occupancy) labeled.try_emplace(p, 0);
            int i = d - 1;
            for (; i >= 0; --i) {
                if (++p[i] < size) break;
                p[i] = 0;
            }
            if (i < 0) break;
        }
    }

    std::vector<std::pair<Coord, std::vector<real>>> sites;
    sites.reserve(labeled.size());
    std::array<int32_t, kMaxDim> sz{};
    for (int i = 0; i < d; ++i) sz[i] = size;
    SynthSample out;
    for (const auto& [cell, label] : labeled) {
        Coord c;
        c.batch = 0;
        for (int i = 0; i < d; ++i) c.pos[i] = cell[i];
        sites.push_back({c, {real(1)}});
    }
    out.tensor = build_sparse(d, sz, 1, sites, 1);
    out.site_labels.resize(static_cast<size_t>(out.tensor.active()));
    for (const auto& [cell, label] : labeled) {
        Coord c;
        c.batch = 0;
        for (int i = 0; i < d; ++i) c.pos[i] = cell[i];
        out.site_labels[out.tensor.row_of(c)] = label;
    }
    return out;
}

namespace {

// control polylines in the unit square, y up
const std::vector<std::vector<std::array<double, 2>>>& digit_templates(int digit) {
    static const std::vector<std::vector<std::vector<std::array<double, 2>>>> all = {
        /*0*/ {{{0.5, 0.95}, {0.2, 0.80}, {0.1, 0.50}, {0.2, 0.20}, {0.5, 0.05}, {0.8, 0.20}, {0.9, 0.50}, {0.8, 0.80}, {0.5, 0.95}}},
        /*1*/ {{{0.35, 0.75}, {0.55, 0.95}, {0.55, 0.05}}, {{0.30, 0.05}, {0.80, 0.05}}},
        /*2*/ {{{0.15, 0.75}, {0.30, 0.92}, {0.60, 0.95}, {0.82, 0.80}, {0.85, 0.60}, {0.60, 0.40}, {0.30, 0.20}, {0.12, 0.05}, {0.85, 0.05}}},
        /*3*/ {{{0.15, 0.90}, {0.55, 0.95}, {0.80, 0.80}, {0.75, 0.60}, {0.50, 0.50}, {0.78, 0.40}, {0.82, 0.20}, {0.55, 0.05}, {0.15, 0.10}}},
        /*4*/ {{{0.70, 0.95}, {0.15, 0.40}, {0.85, 0.40}}, {{0.65, 0.60}, {0.65, 0.05}}},
        /*5*/ {{{0.80, 0.95}, {0.20, 0.95}, {0.18, 0.55}, {0.55, 0.60}, {0.80, 0.45}, {0.78, 0.20}, {0.50, 0.05}, {0.15, 0.12}}},
        /*6*/ {{{0.75, 0.90}, {0.45, 0.95}, {0.20, 0.70}, {0.12, 0.40}, {0.20, 0.15}, {0.50, 0.05}, {0.75, 0.18}, {0.78, 0.38}, {0.55, 0.50}, {0.25, 0.42}}},
        /*7*/ {{{0.12, 0.90}, {0.85, 0.92}, {0.50, 0.50}, {0.30, 0.05}}},
        /*8*/ {{{0.50, 0.50}, {0.25, 0.62}, {0.20, 0.85}, {0.50, 0.95}, {0.80, 0.85}, {0.75, 0.62}, {0.50, 0.50}, {0.22, 0.35}, {0.20, 0.15}, {0.50, 0.05}, {0.80, 0.15}, {0.78, 0.35}, {0.50, 0.50}}},
        /*9*/ {{{0.80, 0.70}, {0.55, 0.85}, {0.30, 0.80}, {0.22, 0.60}, {0.35, 0.45}, {0.60, 0.45}, {0.80, 0.60}, {0.80, 0.90}, {0.75, 0.40}, {0.60, 0.05}}},
    };
    return all[static_cast<size_t>(digit)];
}

} // namespace

StrokeSample synth_digit(int digit, uint64_t seed) {
    check(digit >= 0 && digit <= 9, ErrorCode::OutOfRange, "digit class must be 0..9");
    std::mt19937_64 rng(seed);
    const double pi = 3.14159265358979323846;
    std::uniform_real_distribution<double> angle_d(-22.0 * pi / 180.0, 22.0 * pi / 180.0);
    std::uniform_real_distribution<double> scale_d(0.65, 1.35);
    std::uniform_real_distribution<double> shear_d(-0.25, 0.25);
    std::uniform_real_distribution<double> bend_d(-0.35, 0.35);
    std::normal_distribution<double> jitter(0.0, 0.025);
    const double theta = angle_d(rng);
    const double sx = scale_d(rng), sy = scale_d(rng);
    const double sh = shear_d(rng);
    const double bend = bend_d(rng); // smooth writer-style warp across the glyph
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);

    StrokeSample out;
    out.label = digit;
    for (const auto& stroke : digit_templates(digit)) {
        std::vector<std::array<double, 2>> pts;
        pts.reserve(stroke.size());
        for (const auto& p : stroke) {
            double x = (p[0] - 0.5) * sx + jitter(rng);
            double y = (p[1] - 0.5) * sy + jitter(rng);
            x += sh * y + bend * y * y; // quadratic bend mimics slanted pens
            const double xr = cos_t * x - sin_t * y;
            const double yr = sin_t * x + cos_t * y;
            pts.push_back({xr + 0.5, yr + 0.5});
        }
        out.strokes.push_back(std::move(pts));
    }
    return out;
}

std::vector<StrokeSample> synth_digit_corpus(int count, uint64_t seed) {
    std::vector<StrokeSample> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        out.push_back(synth_digit(i % 10, mix_seed(seed, static_cast<uint64_t>(i))));
    }
    return out;
}

std::string format_pointcloud(const PointCloudSample& sample) {
    const int n_feat = sample.features.empty() ? 0 : static_cast<int>(sample.features.front().size());
    std::ostringstream os;
    os.precision(17);
    os << sample.d << " " << sample.points.size() << " " << n_feat << "\n";
    for (size_t p = 0; p < sample.points.size(); ++p) {
        for (int i = 0; i < sample.d; ++i) {
            if (i) os << " ";
            os << sample.points[p][i];
        }
        for (int i = 0; i < n_feat; ++i) os << " " << sample.features[p][i];
        os << " " << (sample.labels.empty() ? -1 : sample.labels[p]) << "\n";
    }
    return os.str();
}

PointCloudSample parse_pointcloud(const std::string& text) {
    std::istringstream is(text);
    PointCloudSample sample;
    int64_t n_points = 0;
    int n_feat = 0;
    if (!(is >> sample.d >> n_points >> n_feat)) {
        fail(ErrorCode::ParseError, "line 1: bad point-cloud header");
    }
    check(sample.d >= 2 && sample.d <= kMaxDim, ErrorCode::ParseError, "header dimension must be 2..4");
    check(n_points >= 0 && n_feat >= 0, ErrorCode::ParseError, "negative counts in header");
    bool any_label = false;
    for (int64_t p = 0; p < n_points; ++p) {
        std::vector<double> pt(sample.d);
        std::vector<double> feat(n_feat);
        int label;
        for (int i = 0; i < sample.d; ++i) {
            if (!(is >> pt[i])) parse_fail(static_cast<int>(p + 2), "missing coordinate");
        }
        for (int i = 0; i < n_feat; ++i) {
            if (!(is >> feat[i])) parse_fail(static_cast<int>(p + 2), "missing feature");
        }
        if (!(is >> label)) parse_fail(static_cast<int>(p + 2), "missing label");
        sample.points.push_back(std::move(pt));
        if (n_feat > 0) sample.features.push_back(std::move(feat));
        sample.labels.push_back(label);
        any_label = any_label || label != -1;
    }
    if (!any_label) sample.labels.clear();
    check(!sample.points.empty(), ErrorCode::EmptyCloud, "point cloud has no points");
    return sample;
}

} // namespace spae
