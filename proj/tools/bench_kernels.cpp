// Timing harness comparing the serial reference kernels against the OpenMP
// path on realistic rulebook workloads. Also asserts the two paths agree
// bit for bit, which is the contract the dispatcher relies on.

#include <chrono>
#include <cstring>
#include <iomanip>
#include <iostream>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "spae/data.hpp"
#include "spae/kernels.hpp"
#include "spae/layers.hpp"

using namespace spae;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

bool bits_equal(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols &&
           std::memcmp(a.v.data(), b.v.data(), sizeof(real) * a.v.size()) == 0;
}

struct Case {
    std::string name;
    Rulebook rb;
    Matrix in;
    int m, n;
};

Case make_case(int d, int size, double occupancy, int m, int n, uint64_t seed) {
    SynthSample sample = synth_sparse(d, size, SynthStyle::Random, seed, occupancy);
    std::mt19937_64 rng(seed ^ 0xbeef);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Case c;
    c.name = std::to_string(d) + "d " + std::to_string(size) + "^d occ=" + std::to_string(occupancy);
    c.rb = build_ssc_rulebook(sample.tensor, 3);
    c.in = Matrix(sample.tensor.active(), m);
    for (real& v : c.in.v) v = static_cast<real>(u(rng));
    c.m = m;
    c.n = n;
    return c;
}

} // namespace

int main(int argc, char** argv) {
    bool quick = false;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--quick") quick = true;
    }
#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
#else
    const int max_threads = 1;
#endif
    const int reps = quick ? 3 : 20;

    std::vector<Case> cases;
    if (quick) {
        cases.push_back(make_case(2, 64, 0.10, 16, 16, 7));
        cases.push_back(make_case(3, 24, 0.05, 16, 16, 8));
    } else {
        cases.push_back(make_case(2, 256, 0.08, 32, 32, 7));
        cases.push_back(make_case(3, 64, 0.03, 32, 32, 8));
        cases.push_back(make_case(4, 24, 0.01, 16, 16, 9));
    }

    std::cout << std::left << std::setw(28) << "case" << std::setw(12) << "kernel"
              << std::setw(10) << "rules" << std::setw(12) << "serial ms" << std::setw(12)
              << "omp ms" << std::setw(10) << "speedup" << "match\n";

    int failures = 0;
    for (const Case& c : cases) {
        std::mt19937_64 rng(42);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<real> kernel(static_cast<size_t>(c.rb.offset_count()) * c.m * c.n);
        std::vector<real> bias(static_cast<size_t>(c.n));
        for (real& v : kernel) v = static_cast<real>(u(rng));
        for (real& v : bias) v = static_cast<real>(u(rng));

        const int64_t out_rows = static_cast<int64_t>(c.rb.out_coords.size());
        GatherPlan gather = make_gather_plan(c.rb, out_rows);
        ScatterPlan scatter = make_scatter_plan(c.rb, c.in.rows);

        // forward
        Matrix out_serial(out_rows, c.n), out_par(out_rows, c.n);
        auto t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < reps; ++r) {
            kern::serial::conv_forward(gather, c.in, kernel.data(), bias.data(), out_serial);
        }
        const double fwd_serial = ms_since(t0) / reps;
        kern::set_threads(max_threads);
        t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < reps; ++r) {
            kern::par::conv_forward(gather, c.in, kernel.data(), bias.data(), out_par);
        }
        const double fwd_par = ms_since(t0) / reps;
        const bool fwd_match = bits_equal(out_serial, out_par);
        failures += !fwd_match;
        std::cout << std::left << std::setw(28) << c.name << std::setw(12) << "fwd"
                  << std::setw(10) << c.rb.rule_count() << std::setw(12) << fwd_serial
                  << std::setw(12) << fwd_par << std::setw(10) << fwd_serial / fwd_par
                  << (fwd_match ? "yes" : "NO") << "\n";

        // backward wrt input
        Matrix din_serial(c.in.rows, c.m), din_par(c.in.rows, c.m);
        t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < reps; ++r) {
            din_serial.zero();
            kern::serial::conv_backward_input(scatter, out_serial, kernel.data(), c.m, din_serial);
        }
        const double bwd_serial = ms_since(t0) / reps;
        t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < reps; ++r) {
            din_par.zero();
            kern::par::conv_backward_input(scatter, out_serial, kernel.data(), c.m, din_par);
        }
        const double bwd_par = ms_since(t0) / reps;
        const bool bwd_match = bits_equal(din_serial, din_par);
        failures += !bwd_match;
        std::cout << std::left << std::setw(28) << c.name << std::setw(12) << "bwd-in"
                  << std::setw(10) << c.rb.rule_count() << std::setw(12) << bwd_serial
                  << std::setw(12) << bwd_par << std::setw(10) << bwd_serial / bwd_par
                  << (bwd_match ? "yes" : "NO") << "\n";

        // backward wrt parameters
        std::vector<real> dk_serial(kernel.size(), 0), dk_par(kernel.size(), 0);
        std::vector<real> db_serial(bias.size(), 0), db_par(bias.size(), 0);
        t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < reps; ++r) {
            std::fill(dk_serial.begin(), dk_serial.end(), real(0));
            std::fill(db_serial.begin(), db_serial.end(), real(0));
            kern::serial::conv_backward_params(c.rb, c.in, out_serial, dk_serial.data(),
                                               db_serial.data());
        }
        const double bwp_serial = ms_since(t0) / reps;
        t0 = std::chrono::steady_clock::now();
        for (int r = 0; r < reps; ++r) {
            std::fill(dk_par.begin(), dk_par.end(), real(0));
            std::fill(db_par.begin(), db_par.end(), real(0));
            kern::par::conv_backward_params(c.rb, c.in, out_serial, dk_par.data(), db_par.data());
        }
        const double bwp_par = ms_since(t0) / reps;
        const bool bwp_match = dk_serial == dk_par && db_serial == db_par;
        failures += !bwp_match;
        std::cout << std::left << std::setw(28) << c.name << std::setw(12) << "bwd-par"
                  << std::setw(10) << c.rb.rule_count() << std::setw(12) << bwp_serial
                  << std::setw(12) << bwp_par << std::setw(10) << bwp_serial / bwp_par
                  << (bwp_match ? "yes" : "NO") << "\n";
    }

    if (failures) {
        std::cerr << failures << " kernel(s) diverged between serial and OpenMP paths\n";
        return 1;
    }
    return 0;
}
