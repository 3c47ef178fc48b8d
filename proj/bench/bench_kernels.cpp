// Serial reference vs OpenMP kernels on synthetic inputs.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "usegmix/kernels.hpp"
#include "usegmix/rng.hpp"

using namespace usegmix;
using namespace usegmix::kernels;

namespace {

LabImage random_lab(int side) {
    LabImage lab{side, side, {}, {}, {}};
    Rng rng(11);
    const std::size_t n = static_cast<std::size_t>(side) * side;
    for (std::size_t i = 0; i < n; ++i) {
        lab.l.push_back(100.0 * rng.uniform());
        lab.a.push_back(-50.0 + 100.0 * rng.uniform());
        lab.b.push_back(-50.0 + 100.0 * rng.uniform());
    }
    return lab;
}

std::vector<SlicCenter> grid_centers(const LabImage& lab, int per_side) {
    std::vector<SlicCenter> c;
    const double step = static_cast<double>(lab.width) / per_side;
    for (int j = 0; j < per_side; ++j) {
        for (int i = 0; i < per_side; ++i) {
            const double x = (i + 0.5) * step, y = (j + 0.5) * step;
            const auto k = static_cast<std::size_t>(y) * lab.width + static_cast<std::size_t>(x);
            c.push_back({lab.l[k], lab.a[k], lab.b[k], x, y});
        }
    }
    return c;
}

MaskedLaplacian grid_laplacian(int side) {
    MaskedLaplacian op;
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            const int i = y * side + x;
            op.diag.push_back(4.0);
            op.neighbors.push_back({x > 0 ? i - 1 : -1, x + 1 < side ? i + 1 : -1, y > 0 ? i - side : -1,
                                    y + 1 < side ? i + side : -1});
        }
    }
    return op;
}

template <auto Assign>
void BM_SlicAssign(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const LabImage lab = random_lab(side);
    const auto centers = grid_centers(lab, 6);
    std::vector<std::int32_t> labels(static_cast<std::size_t>(side) * side);
    const double window = static_cast<double>(side) / 6;
    for (auto _ : state) {
        Assign(lab, centers, window, 10.0, labels);
        benchmark::DoNotOptimize(labels.data());
    }
    state.SetItemsProcessed(state.iterations() * side * side);
}

template <auto Dilate>
void BM_Dilate(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    std::vector<std::uint8_t> in(static_cast<std::size_t>(side) * side), out(in.size());
    Rng rng(3);
    for (auto& v : in) v = rng.uniform() < 0.02 ? 1 : 0;
    for (auto _ : state) {
        Dilate(in, side, side, 3, out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * side * side);
}

template <auto Apply>
void BM_Laplacian(benchmark::State& state) {
    const int side = static_cast<int>(state.range(0));
    const MaskedLaplacian op = grid_laplacian(side);
    std::vector<double> x(op.size()), y(op.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.001 * static_cast<double>(i));
    for (auto _ : state) {
        Apply(op, x, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(op.size()));
}

template <auto Dot>
void BM_Dot(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = std::cos(0.01 * static_cast<double>(i));
        b[i] = std::sin(0.02 * static_cast<double>(i));
    }
    for (auto _ : state) benchmark::DoNotOptimize(Dot(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

}  // namespace

BENCHMARK(BM_SlicAssign<serial::slic_assign>)->Name("slic_assign/serial")->Arg(128)->Arg(256);
BENCHMARK(BM_SlicAssign<omp::slic_assign>)->Name("slic_assign/omp")->Arg(128)->Arg(256);
BENCHMARK(BM_Dilate<serial::dilate>)->Name("dilate/serial")->Arg(256)->Arg(512);
BENCHMARK(BM_Dilate<omp::dilate>)->Name("dilate/omp")->Arg(256)->Arg(512);
BENCHMARK(BM_Laplacian<serial::laplacian_apply>)->Name("laplacian/serial")->Arg(256)->Arg(512);
BENCHMARK(BM_Laplacian<omp::laplacian_apply>)->Name("laplacian/omp")->Arg(256)->Arg(512);
BENCHMARK(BM_Dot<serial::dot>)->Name("dot/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_Dot<omp::dot>)->Name("dot/omp")->Arg(1 << 16)->Arg(1 << 20);

BENCHMARK_MAIN();
