#include "spae/rulebook.hpp"

#include <algorithm>
#include <unordered_map>

namespace spae {

namespace {

int64_t ipow(int64_t base, int exp) {
    int64_t r = 1;
    while (exp-- > 0) r *= base;
    return r;
}

bool rule_less(const Rule& a, const Rule& b) {
    if (a.out_row != b.out_row) return a.out_row < b.out_row;
    return a.in_row < b.in_row;
}

void sort_rules(std::vector<std::vector<Rule>>& rules) {
    for (auto& list : rules) std::sort(list.begin(), list.end(), rule_less);
}

// offset index in lexicographic order over [lo, lo+f)^d
int offset_index(const std::array<int32_t, kMaxDim>& delta, int d, int f, int lo) {
    int idx = 0;
    for (int i = 0; i < d; ++i) idx = idx * f + (delta[i] - lo);
    return idx;
}

std::unordered_map<Coord, int32_t, CoordHash> index_of(const std::vector<Coord>& coords) {
    std::unordered_map<Coord, int32_t, CoordHash> idx;
    idx.reserve(coords.size() * 2);
    for (size_t i = 0; i < coords.size(); ++i) idx.emplace(coords[i], static_cast<int32_t>(i));
    return idx;
}

} // namespace

std::array<int32_t, kMaxDim> sc_output_size(const std::array<int32_t, kMaxDim>& in, int d, int f, int s) {
    std::array<int32_t, kMaxDim> out{};
    for (int i = 0; i < d; ++i) {
        int32_t o = (in[i] - f) / s + 1;
        check(in[i] >= f && o > 0, ErrorCode::BadGeometry,
              "SC(f=" + std::to_string(f) + ",s=" + std::to_string(s) + ") output size non-positive for input " +
                  std::to_string(in[i]));
        if (f == s) {
            check(in[i] % s == 0, ErrorCode::BadGeometry,
                  "SC(f=s=" + std::to_string(s) + ") needs sizes divisible by " + std::to_string(s));
        }
        out[i] = o;
    }
    return out;
}

std::array<int32_t, kMaxDim> tc_output_size(const std::array<int32_t, kMaxDim>& in, int d, int f, int s) {
    std::array<int32_t, kMaxDim> out{};
    for (int i = 0; i < d; ++i) out[i] = s * (in[i] - 1) + f;
    return out;
}

GatherPlan make_gather_plan(const Rulebook& rb, int64_t out_rows) {
    GatherPlan plan;
    plan.row_ptr.assign(out_rows + 1, 0);
    for (const auto& list : rb.rules) {
        for (const Rule& r : list) plan.row_ptr[r.out_row + 1]++;
    }
    for (int64_t i = 0; i < out_rows; ++i) plan.row_ptr[i + 1] += plan.row_ptr[i];
    plan.items.resize(static_cast<size_t>(plan.row_ptr[out_rows]));
    std::vector<int64_t> cursor(plan.row_ptr.begin(), plan.row_ptr.end() - 1);
    // offsets visited in ascending order and rule lists already sorted, so
    // each row's items land sorted by (offset, in_row)
    for (int o = 0; o < rb.offset_count(); ++o) {
        for (const Rule& r : rb.rules[o]) {
            plan.items[cursor[r.out_row]++] = {o, r.in_row};
        }
    }
    return plan;
}

ScatterPlan make_scatter_plan(const Rulebook& rb, int64_t in_rows) {
    ScatterPlan plan;
    plan.row_ptr.assign(in_rows + 1, 0);
    for (const auto& list : rb.rules) {
        for (const Rule& r : list) plan.row_ptr[r.in_row + 1]++;
    }
    for (int64_t i = 0; i < in_rows; ++i) plan.row_ptr[i + 1] += plan.row_ptr[i];
    plan.items.resize(static_cast<size_t>(plan.row_ptr[in_rows]));
    std::vector<int64_t> cursor(plan.row_ptr.begin(), plan.row_ptr.end() - 1);
    for (int o = 0; o < rb.offset_count(); ++o) {
        for (const Rule& r : rb.rules[o]) {
            plan.items[cursor[r.in_row]++] = {o, r.out_row};
        }
    }
    // items of a row arrive ordered by (offset, out_row) because rule lists
    // are sorted by out_row within each offset
    return plan;
}

Rulebook build_sc_rulebook(const SparseTensor& in, int f, int s) {
    check(f >= s && s >= 1, ErrorCode::BadGeometry, "SC requires f >= s >= 1");
    Rulebook rb;
    rb.d = in.d;
    rb.f = f;
    rb.s = s;
    rb.in_coords = in.coords;
    rb.in_size = in.size;
    rb.in_batch = in.batch_count;
    rb.out_size = sc_output_size(in.size, in.d, f, s);
    rb.rules.assign(static_cast<size_t>(ipow(f, in.d)), {});

    // (offset, input row) contributions keyed by output coordinate
    std::vector<std::pair<Coord, std::pair<int32_t, int32_t>>> contrib;
    std::array<int32_t, kMaxDim> lo{}, hi{}, y{};
    for (int64_t row = 0; row < in.active(); ++row) {
        const Coord& c = in.coords[row];
        for (int i = 0; i < in.d; ++i) {
            int32_t x = c.pos[i];
            int32_t num = x - f + s; // ceil((x-f+1)/s) = num/s for num > 0
            lo[i] = num > 0 ? num / s : 0;
            hi[i] = std::min<int32_t>(rb.out_size[i] - 1, x / s);
        }
        y = lo;
        while (true) {
            std::array<int32_t, kMaxDim> delta{};
            for (int i = 0; i < in.d; ++i) delta[i] = c.pos[i] - s * y[i];
            int o = offset_index(delta, in.d, f, 0);
            contrib.push_back({Coord(c.batch, y), {o, static_cast<int32_t>(row)}});
            int i = in.d - 1;
            for (; i >= 0; --i) {
                if (++y[i] <= hi[i]) break;
                y[i] = lo[i];
            }
            if (i < 0) break;
        }
    }

    std::vector<Coord> outs;
    outs.reserve(contrib.size());
    for (const auto& c : contrib) outs.push_back(c.first);
    std::sort(outs.begin(), outs.end());
    outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
    rb.out_coords = std::move(outs);
    auto out_index = index_of(rb.out_coords);

    for (const auto& [oc, oi] : contrib) {
        rb.rules[oi.first].push_back({oi.second, out_index.at(oc)});
    }
    sort_rules(rb.rules);
    return rb;
}

Rulebook build_ssc_rulebook(const SparseTensor& in, int f) {
    check(f >= 1 && f % 2 == 1, ErrorCode::EvenFilter, "SSC filter size must be odd");
    Rulebook rb;
    rb.d = in.d;
    rb.f = f;
    rb.s = 1;
    rb.in_coords = in.coords;
    rb.out_coords = in.coords; // sparsity preserved, same order
    rb.in_size = in.size;
    rb.out_size = in.size;
    rb.in_batch = in.batch_count;
    rb.rules.assign(static_cast<size_t>(ipow(f, in.d)), {});

    const int h = (f - 1) / 2;
    std::array<int32_t, kMaxDim> delta{};
    for (int64_t out_row = 0; out_row < in.active(); ++out_row) {
        const Coord& y = in.coords[out_row];
        for (int i = 0; i < in.d; ++i) delta[i] = -h;
        while (true) {
            Coord x = y;
            bool ok = true;
            for (int i = 0; i < in.d; ++i) {
                x.pos[i] += delta[i];
                if (x.pos[i] < 0 || x.pos[i] >= in.size[i]) ok = false;
            }
            if (ok) {
                int32_t in_row = in.row_of(x);
                if (in_row >= 0) {
                    rb.rules[offset_index(delta, in.d, f, -h)].push_back({in_row, static_cast<int32_t>(out_row)});
                }
            }
            int i = in.d - 1;
            for (; i >= 0; --i) {
                if (++delta[i] <= h) break;
                delta[i] = -h;
            }
            if (i < 0) break;
        }
    }
    sort_rules(rb.rules);
    return rb;
}

Rulebook build_tc_rulebook(const SparseTensor& in, int f, int s) {
    check(f >= s && s >= 1, ErrorCode::BadGeometry, "TC requires f >= s >= 1");
    Rulebook rb;
    rb.d = in.d;
    rb.f = f;
    rb.s = s;
    rb.in_coords = in.coords;
    rb.in_size = in.size;
    rb.in_batch = in.batch_count;
    rb.out_size = tc_output_size(in.size, in.d, f, s);
    rb.rules.assign(static_cast<size_t>(ipow(f, in.d)), {});

    std::vector<std::pair<Coord, std::pair<int32_t, int32_t>>> contrib;
    std::array<int32_t, kMaxDim> delta{};
    for (int64_t row = 0; row < in.active(); ++row) {
        const Coord& x = in.coords[row];
        delta.fill(0);
        while (true) {
            Coord y = x;
            for (int i = 0; i < in.d; ++i) y.pos[i] = s * x.pos[i] + delta[i];
            contrib.push_back({y, {offset_index(delta, in.d, f, 0), static_cast<int32_t>(row)}});
            int i = in.d - 1;
            for (; i >= 0; --i) {
                if (++delta[i] < f) break;
                delta[i] = 0;
            }
            if (i < 0) break;
        }
    }

    std::vector<Coord> outs;
    outs.reserve(contrib.size());
    for (const auto& c : contrib) outs.push_back(c.first);
    std::sort(outs.begin(), outs.end());
    outs.erase(std::unique(outs.begin(), outs.end()), outs.end());
    rb.out_coords = std::move(outs);
    auto out_index = index_of(rb.out_coords);

    for (const auto& [oc, oi] : contrib) {
        rb.rules[oi.first].push_back({oi.second, out_index.at(oc)});
    }
    sort_rules(rb.rules);
    return rb;
}

Rulebook build_dc_rulebook(const Rulebook& matching_sc) {
    check(!matching_sc.in_coords.empty() || matching_sc.out_coords.empty(), ErrorCode::MissingPattern,
          "matching SC rulebook has no recorded input pattern");
    Rulebook rb;
    rb.d = matching_sc.d;
    rb.f = matching_sc.f;
    rb.s = matching_sc.s;
    rb.in_coords = matching_sc.out_coords;
    rb.out_coords = matching_sc.in_coords;
    rb.in_size = matching_sc.out_size;
    rb.out_size = matching_sc.in_size;
    rb.in_batch = matching_sc.in_batch;
    rb.rules.resize(matching_sc.rules.size());
    for (size_t o = 0; o < matching_sc.rules.size(); ++o) {
        rb.rules[o].reserve(matching_sc.rules[o].size());
        for (const Rule& r : matching_sc.rules[o]) {
            rb.rules[o].push_back({r.out_row, r.in_row});
        }
    }
    sort_rules(rb.rules);
    return rb;
}

} // namespace spae
