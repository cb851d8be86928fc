#include <doctest.h>

#include <random>

#include "rodenet/block.hpp"

using namespace rodenet;

namespace {

std::mt19937 make_rng(unsigned seed) { return std::mt19937(seed); }

void fill_random(std::vector<double>& v, std::mt19937& rng, double scale = 0.5) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (auto& e : v) e = dist(rng);
}

void fill_random(TensorF& t, std::mt19937& rng, double scale = 0.5) {
    fill_random(t.v, rng, scale);
}

BlockParams<double> random_ode_block(int ch, std::mt19937& rng) {
    BlockParams<double> b(BlockFlavor::kOde, ch, ch, 1);
    fill_random(b.conv1.w, rng);
    fill_random(b.conv2.w, rng);
    std::uniform_real_distribution<double> gdist(0.5, 1.5);
    for (auto& g : b.bn1.gamma) g = gdist(rng);
    for (auto& g : b.bn2.gamma) g = gdist(rng);
    fill_random(b.bn1.beta, rng, 0.2);
    fill_random(b.bn2.beta, rng, 0.2);
    return b;
}

double dot(const TensorF& a, const TensorF& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) acc += a.v[i] * b.v[i];
    return acc;
}

}  // namespace

TEST_CASE("block parameter counts close against the published sizes") {
    // ODE block, 64 channels: 2*(3*3*65*64) + 2*(2*64) = 75136 params = 300.54 kB.
    BlockParams<double> ode64(BlockFlavor::kOde, 64, 64, 1);
    CHECK(ode64.param_count() == 75136);
    CHECK(4.0 * ode64.param_count() / 1000.0 == doctest::Approx(300.544));

    // ODE block, 16 channels: 2*3*3*17*16 + 4*16 = 4960 params = 19.84 kB.
    BlockParams<double> ode16(BlockFlavor::kOde, 16, 16, 1);
    CHECK(ode16.param_count() == 4960);

    // Plain stride-2 block 16->32: 3*3*16*32 + 3*3*32*32 + 4*32 = 13952 = 55.81 kB.
    BlockParams<double> down(BlockFlavor::kPlain, 16, 32, 2);
    CHECK(down.param_count() == 13952);
    CHECK(4.0 * down.param_count() / 1000.0 == doctest::Approx(55.808));
}

TEST_CASE("ode flavor validates its shape constraints") {
    CHECK_THROWS_AS(BlockParams<double>(BlockFlavor::kOde, 16, 32, 1), std::invalid_argument);
    CHECK_THROWS_AS(BlockParams<double>(BlockFlavor::kOde, 16, 16, 2), std::invalid_argument);
}

TEST_CASE("zero dynamics leave the state unchanged") {
    // gamma = 0 makes the block output identically zero.
    BlockParams<double> b(BlockFlavor::kOde, 4, 4, 1);
    auto rng = make_rng(31);
    fill_random(b.conv1.w, rng);
    fill_random(b.conv2.w, rng);

    TensorF z0(4, 6, 6);
    fill_random(z0, rng);
    const TensorF d = block_dynamics(z0, 0.3, b);
    CHECK(d.v == std::vector<double>(d.size(), 0.0));

    SolverConfig cfg{SolverMethod::kRk4, 0.0, 1.0, 4};
    const TensorF out = ode_block_forward(z0, b, cfg);
    CHECK(out.v == z0.v);
}

TEST_CASE("single Euler step with h=1 and clamped time is one residual step") {
    auto rng = make_rng(33);
    const BlockParams<double> b = random_ode_block(3, rng);
    TensorF z0(3, 4, 4);
    fill_random(z0, rng);

    BlockRunConfig rc;
    rc.clamp_time = true;
    SolverConfig cfg{SolverMethod::kEuler, 0.0, 1.0, 1};
    const TensorF got = ode_block_forward(z0, b, cfg, rc);

    TensorF want = z0;
    axpy_in_place(want, 1.0, block_dynamics(z0, 0.0, b, rc));
    CHECK(got.v == want.v);
}

TEST_CASE("two Euler steps equal the manual unroll") {
    auto rng = make_rng(35);
    const BlockParams<double> b = random_ode_block(2, rng);
    TensorF z0(2, 4, 4);
    fill_random(z0, rng);

    SolverConfig cfg{SolverMethod::kEuler, 0.0, 1.0, 2};
    const TensorF got = ode_block_forward(z0, b, cfg);

    const double h = 0.5;
    TensorF z1 = z0;
    axpy_in_place(z1, h, block_dynamics(z0, 0.0, b));
    TensorF z2 = z1;
    axpy_in_place(z2, h, block_dynamics(z1, h, b));
    for (std::size_t i = 0; i < z2.v.size(); ++i) {
        CHECK(got.v[i] == doctest::Approx(z2.v[i]).epsilon(1e-15));
    }
}

TEST_CASE("single-pixel ode dynamics match a hand-rolled scalar pipeline") {
    // C=1, H=W=1: conv over the padded single pixel only sees the center tap,
    // dynamic BN over one value normalizes to beta, so f(z) = beta2.
    BlockParams<double> b(BlockFlavor::kOde, 1, 1, 1);
    auto rng = make_rng(37);
    fill_random(b.conv1.w, rng);
    fill_random(b.conv2.w, rng);
    b.bn1.gamma[0] = 1.3;
    b.bn1.beta[0] = 0.7;  // positive so the ReLU passes it
    b.bn2.gamma[0] = 0.9;
    b.bn2.beta[0] = -0.2;

    TensorF z(1, 1, 1);
    z.v[0] = 0.42;
    const TensorF d = block_dynamics(z, 0.25, b);
    CHECK(d.v[0] == doctest::Approx(-0.2).epsilon(1e-9));
}

TEST_CASE("plain block with zero residual path is the pure shortcut") {
    BlockParams<double> b(BlockFlavor::kPlain, 4, 4, 1);
    auto rng = make_rng(39);
    fill_random(b.conv1.w, rng);
    fill_random(b.conv2.w, rng);
    TensorF z(4, 6, 6);
    fill_random(z, rng);
    const TensorF y = plain_block_forward(z, b);
    CHECK(y.v == z.v);
}

TEST_CASE("stride-2 shortcut subsamples and zero-pads") {
    TensorF z(2, 4, 4);
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) z.at(c, i, j) = 100.0 * c + 10.0 * i + j;

    const TensorF s = stride2_shortcut(z, 4);
    CHECK(s.c == 4);
    CHECK(s.h == 2);
    CHECK(s.w == 2);
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                CHECK(s.at(c, i, j) == 100.0 * c + 10.0 * (2 * i) + 2 * j);
                CHECK(s.at(c + 2, i, j) == 0.0);
            }
        }
    }
}

TEST_CASE("equivalence: M executions at h=1 equal M stacked plain blocks bitwise") {
    auto rng = make_rng(41);
    const int ch = 4, m = 3;
    const BlockParams<double> ode = random_ode_block(ch, rng);

    // Plain twin sharing the ODE weights with the time channel dropped.
    BlockParams<double> plain(BlockFlavor::kPlain, ch, ch, 1);
    for (int o = 0; o < ch; ++o)
        for (int c = 0; c < ch; ++c)
            for (int u = 0; u < 3; ++u)
                for (int v = 0; v < 3; ++v) {
                    plain.conv1.wt(o, c, u, v) = ode.conv1.wt(o, c, u, v);
                    plain.conv2.wt(o, c, u, v) = ode.conv2.wt(o, c, u, v);
                }
    plain.bn1 = ode.bn1;
    plain.bn2 = ode.bn2;

    TensorF z0(ch, 6, 6);
    fill_random(z0, rng);

    BlockRunConfig rc;
    rc.clamp_time = true;
    SolverConfig cfg{SolverMethod::kEuler, 0.0, static_cast<double>(m), m};  // h = 1
    const TensorF via_ode = ode_block_forward(z0, ode, cfg, rc);

    TensorF via_stack = z0;
    for (int i = 0; i < m; ++i) via_stack = plain_block_forward(via_stack, plain);

    CHECK(via_ode.v == via_stack.v);  // bitwise in float64
}

TEST_CASE("ode flavor never changes the tensor shape") {
    auto rng = make_rng(43);
    const BlockParams<double> b = random_ode_block(5, rng);
    TensorF z(5, 8, 8);
    fill_random(z, rng);
    for (auto m : {SolverMethod::kEuler, SolverMethod::kRk2, SolverMethod::kRk4}) {
        SolverConfig cfg{m, 0.0, 1.0, 3};
        const TensorF out = ode_block_forward(z, b, cfg);
        CHECK(out.same_shape(z));
    }
}

TEST_CASE("block vjps match directional finite differences") {
    auto rng = make_rng(45);
    const double step = 1e-5;

    SUBCASE("ode dynamics") {
        const BlockParams<double> b = random_ode_block(3, rng);
        TensorF z(3, 4, 4), up(3, 4, 4), dir(3, 4, 4);
        fill_random(z, rng);
        fill_random(up, rng);
        fill_random(dir, rng);
        const BlockVjp v = block_dynamics_vjp(z, 0.3, b, {}, up);
        const double got = dot(v.dz, dir);
        auto scalar = [&](double eps) {
            TensorF ze = z;
            axpy_in_place(ze, eps, dir);
            return dot(up, block_dynamics(ze, 0.3, b));
        };
        const double want = (scalar(step) - scalar(-step)) / (2 * step);
        CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }

    SUBCASE("plain block incl. stride-2 shortcut") {
        BlockParams<double> b(BlockFlavor::kPlain, 2, 4, 2);
        fill_random(b.conv1.w, rng);
        fill_random(b.conv2.w, rng);
        std::uniform_real_distribution<double> gdist(0.5, 1.5);
        for (auto& g : b.bn1.gamma) g = gdist(rng);
        for (auto& g : b.bn2.gamma) g = gdist(rng);
        TensorF z(2, 6, 6), up(4, 3, 3), dir(2, 6, 6);
        fill_random(z, rng);
        fill_random(up, rng);
        fill_random(dir, rng);
        const BlockVjp v = plain_block_vjp(z, b, {}, up);
        const double got = dot(v.dz, dir);
        auto scalar = [&](double eps) {
            TensorF ze = z;
            axpy_in_place(ze, eps, dir);
            return dot(up, plain_block_forward(ze, b));
        };
        const double want = (scalar(step) - scalar(-step)) / (2 * step);
        CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }

    SUBCASE("unrolled solve, every method") {
        const BlockParams<double> b = random_ode_block(2, rng);
        TensorF z(2, 4, 4), up(2, 4, 4), dir(2, 4, 4);
        fill_random(z, rng);
        fill_random(up, rng);
        fill_random(dir, rng);
        for (auto m : {SolverMethod::kEuler, SolverMethod::kRk2, SolverMethod::kRk4}) {
            SolverConfig cfg{m, 0.0, 1.0, 2};
            const BlockVjp v = ode_block_vjp_unrolled(z, b, cfg, {}, up);
            const double got = dot(v.dz, dir);
            auto scalar = [&](double eps) {
                TensorF ze = z;
                axpy_in_place(ze, eps, dir);
                return dot(up, ode_block_forward(ze, b, cfg));
            };
            const double want = (scalar(step) - scalar(-step)) / (2 * step);
            CHECK(got == doctest::Approx(want).epsilon(1e-6));
        }
    }
}
