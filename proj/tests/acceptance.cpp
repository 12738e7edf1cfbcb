// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
// on the command line to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "test_support.hpp"

#ifndef GDD_CLI_PATH
#error "GDD_CLI_PATH must name the gdd_cli executable"
#endif

using namespace gdd;
using namespace gdd::test::oracle;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
    void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome gradient_integrity() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = run_gradcheck_suite(0, 1e-5, 1e-4);
    const double secs = seconds_since(t0);
    double worst_op = 0.0, e2e = 0.0;
    for (const auto& r : results) {
        o.require(r.passed(), r.name + " error " + fmt("%.2e", r.max_error));
        if (r.name == "gdd_end_to_end") e2e = r.max_error;
        else worst_op = std::max(worst_op, r.max_error);
    }
    o.require(secs < 60.0, "suite took " + fmt("%.1f s", secs));
    o.note(std::to_string(results.size()) + " checks, worst op " + fmt("%.1e", worst_op) + ", end-to-end " +
           fmt("%.1e", e2e) + ", " + fmt("%.1f s", secs));
    return o;
}

Outcome metric_oracles() {
    Outcome o;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const auto ref = gdd::test::random_tensor(rng, Shape{4, 4, 4}, 0.2, 1.0);
        const auto x = gdd::test::random_tensor(rng, Shape{4, 4, 4}, 0.2, 1.0);
        const double r = oracle_rmse(x, ref);
        worst = std::max({worst, std::abs(rmse(x, ref) - r), std::abs(psnr(x, ref) - 20.0 * std::log10(1.0 / r)),
                          std::abs(spectral_angle(x, ref) - oracle_sa(x, ref)),
                          std::abs(ergas(x, ref, 4.0) - oracle_ergas(x, ref, 4.0)),
                          std::abs(scc(x, ref) - oracle_scc(x, ref))});
    }
    o.require(worst <= 1e-9, "full-reference oracle gap " + fmt("%.2e", worst));

    double lum = 0.0;
    for (double a : {0.05, 0.3, 0.8})
        for (double b : {0.1, 0.6, 1.0}) {
            const Tensor<double> x(Shape{2, 16, 16}, a), ref(Shape{2, 16, 16}, b);
            lum = std::max(lum, std::abs(ssim(x, ref) - (2 * a * b + 1e-4) / (a * a + b * b + 1e-4)));
        }
    o.require(lum <= 1e-12, "ssim luminance gap " + fmt("%.2e", lum));

    double q = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(100 + seed);
        const auto ref = gdd::test::random_tensor(rng, Shape{1, 32, 32}, 0.2, 1.0);
        const auto x = ref + 0.2 * gdd::test::random_tensor(rng, ref.shape());
        const auto xs = gdd::test::values(x), rs = gdd::test::values(ref);
        q = std::max(q, std::abs(q2n(x, ref, 32) - oracle_uiqi(xs, rs)));
    }
    o.require(q <= 1e-9, "q2n vs scalar index gap " + fmt("%.2e", q));

    const double qn = qnr(0.0188, 0.0374);
    o.require(std::abs(qn - 0.9446) <= 1e-3, "qnr " + fmt("%.5f", qn));
    o.note("oracle gap " + fmt("%.1e", worst) + ", ssim " + fmt("%.1e", lum) + ", q2n " + fmt("%.1e", q) + ", qnr " +
           fmt("%.4f", qn));
    return o;
}

Outcome loss_consistency() {
    Outcome o;
    const SpatialDownsampler block8(DownsampleKind::block_average, 8), cubic4(DownsampleKind::bicubic, 4);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto hr = synth_scene(seed, 8, 64);
        const auto rgb = SpectralResponse::contiguous_groups(8, 3);
        const auto t = wald_protocol(hr, rgb, 8, DownsampleKind::block_average);
        const double hs = hs_sr_loss(constant(t.reference), t.input, t.guidance, block8, rgb, 1.0).total.value().item();
        o.require(hs == 0.0, "hs-sr seed " + std::to_string(seed) + " loss " + fmt("%.3e", hs));

        const auto scene = gdd::test::pan_consistent_scene(seed, 4, 64);
        const auto p = wald_protocol(scene.image, scene.pan, 4, DownsampleKind::bicubic);
        const double ps = pansharpen_loss(constant(p.reference), p.input, expand_channels(p.guidance, 4), cubic4,
                                          constant(scene.weights), 1.0)
                              .total.value()
                              .item();
        o.require(ps == 0.0, "pansharpen seed " + std::to_string(seed) + " loss " + fmt("%.3e", ps));

        const double dn = denoise_loss(constant(hr), hr).total.value().item();
        o.require(dn == 0.0, "denoise seed " + std::to_string(seed) + " loss " + fmt("%.3e", dn));
    }
    o.note("hs-sr, pansharpen, denoise exactly 0 on seeds 0-4");
    return o;
}

NetworkConfig net_config(std::size_t scales, std::size_t channels) {
    NetworkConfig n;
    n.scales = scales;
    n.base_channels = channels;
    n.guidance_channels = channels;
    return n;
}

Outcome hs_super_resolution() {
    Outcome o;
    using R = float;
    const auto hr = synth_scene<R>(0, 8, 64);
    const auto rgb = SpectralResponse::contiguous_groups(8, 3);
    const auto t = wald_protocol(hr, rgb, 8, DownsampleKind::block_average);
    const auto data = hs_sr_task<R>(t.input, t.guidance, SpatialDownsampler(DownsampleKind::block_average, 8), rgb,
                                    t.reference);
    const double baseline = psnr(bicubic_upsample(t.input, 8), t.reference);

    RunConfig rc;
    rc.task = Task::hs_sr;
    rc.iterations = 1000;
    rc.eval_every = 100;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_task(data, rc, net_config(3, 32));
    const double secs = seconds_since(t0);
    const auto& last = r.trace.rows.back();
    const double gain = *last.psnr - baseline;
    const double ratio = last.loss_total / r.initial_loss;
    o.require(gain >= 2.0, "gain over bicubic " + fmt("%.2f dB", gain));
    o.require(ratio < 0.1, "final/initial loss " + fmt("%.3f", ratio));
    o.require(secs <= 900.0, "runtime " + fmt("%.0f s", secs));
    o.note("bicubic " + fmt("%.2f dB", baseline) + ", gdd " + fmt("%.2f dB", *last.psnr) + ", loss ratio " +
           fmt("%.4f", ratio) + ", " + fmt("%.0f s", secs));
    return o;
}

Outcome pansharpening_ranks() {
    Outcome o;
    using R = float;
    const Variant variants[] = {Variant::gdd, Variant::dip_g, Variant::dip_z};
    std::vector<double> final_psnr[3], early_psnr[3];
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto scene = synth_scene<R>(100 + seed, 4, 64);
        const auto pan = SpectralResponse::band_mean(4).apply(scene);
        const auto w = wald_protocol(scene, pan, 4, DownsampleKind::bicubic);
        const auto data = pansharpen_task<R>(w.input, w.guidance, SpatialDownsampler(DownsampleKind::bicubic, 4),
                                             w.reference);
        for (std::size_t v = 0; v < 3; ++v) {
            RunConfig rc;
            rc.task = Task::pansharpen;
            rc.variant = variants[v];
            rc.iterations = 1000;
            rc.eval_every = 100;
            rc.seed = seed;
            const auto r = run_task(data, rc, net_config(3, 32));
            for (const auto& row : r.trace.rows)
                if (row.iteration == 200) early_psnr[v].push_back(*row.psnr);
            final_psnr[v].push_back(*r.trace.rows.back().psnr);
        }
    }
    const double g = median3(final_psnr[0]), dg = median3(final_psnr[1]), dz = median3(final_psnr[2]);
    const double g200 = median3(early_psnr[0]), dz200 = median3(early_psnr[2]);
    o.require(g >= dg, "median gdd < dip-g");
    o.require(dg >= dz, "median dip-g < dip-z");
    o.require(g200 > dz200, "gdd@200 <= dip-z@200");
    std::string per_seed;
    for (std::size_t v = 0; v < 3; ++v) {
        per_seed += std::string(v ? " | " : "") + to_string(variants[v]);
        for (double p : final_psnr[v]) per_seed += fmt(" %.2f", p);
    }
    o.note("median final gdd " + fmt("%.2f", g) + ", dip-g " + fmt("%.2f", dg) + ", dip-z " + fmt("%.2f", dz) +
           "; @200 gdd " + fmt("%.2f", g200) + ", dip-z " + fmt("%.2f", dz200) + "; per seed " + per_seed);
    return o;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + GDD_CLI_PATH + "\" " + args + " > /dev/null";
    return std::system(cmd.c_str());
}

Outcome determinism() {
    Outcome o;
    const fs::path dir = fs::temp_directory_path() / "gdd_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();
    write_srf_csv(dir / "rgb.csv", SpectralResponse::contiguous_groups(8, 3));
    o.require(run_cli("synth --seed 5 --channels 8 --size 32 --out " + d + "/hr.btf") == 0, "synth failed");
    o.require(run_cli("degrade --hr " + d + "/hr.btf --factor 4 --kind block --srf " + d + "/rgb.csv --out " + d +
                      "/tri") == 0,
              "degrade failed");
    const std::string fuse = "fuse --task hs-sr --input " + d + "/tri/input.btf --guidance " + d +
                             "/tri/guidance.btf --reference " + d + "/tri/reference.btf --srf " + d +
                             "/tri/srf.csv --iters 40 --eval-every 10 --scales 2 --channels 8 --seed 11 --out ";
    o.require(run_cli(fuse + d + "/run_a") == 0, "first fuse failed");
    o.require(run_cli(fuse + d + "/run_b") == 0, "second fuse failed");
    if (o.pass) {
        const auto ta = slurp(dir / "run_a" / "trace.csv"), tb = slurp(dir / "run_b" / "trace.csv");
        const auto oa = slurp(dir / "run_a" / "output.btf"), ob = slurp(dir / "run_b" / "output.btf");
        o.require(!ta.empty() && ta == tb, "trace.csv differs");
        o.require(!oa.empty() && oa == ob, "output.btf differs");
        o.note("trace " + std::to_string(ta.size()) + " bytes, output " + std::to_string(oa.size()) +
               " bytes, identical across two processes");
    }
    fs::remove_all(dir);
    return o;
}

Outcome architecture_invariants() {
    Outcome o;
    for (std::size_t k : {2U, 3U, 4U}) {
        const std::size_t n = 16U << (k - 2);
        auto net = net_config(k, 4);
        const auto m = build_gdd<double>(net, Shape{3, n, n}, 2);
        Rng rng(k);
        const auto g = gdd::test::random_tensor(rng, Shape{3, n, n}, 0, 1);
        const auto f = m.guidance_forward(g);
        bool ok = f.encoder.size() == k && f.decoder.size() == k;
        for (std::size_t s = 1; ok && s <= k; ++s) {
            const std::size_t size = n >> (k - s);
            ok = f.encoder[s - 1].shape() == Shape{4, size, size} && f.decoder[s - 1].shape() == Shape{4, size, size};
        }
        ok = ok && m.forward(g).shape() == Shape{2, n, n};
        o.require(ok, "shape ladder K=" + std::to_string(k));

        for (const auto& map : m.export_attention_maps(g))
            for (double v : map.weights.data())
                if (!(v > 0.0 && v < 1.0)) {
                    o.require(false, "gate value " + fmt("%.17g", v) + " outside (0,1)");
                    break;
                }
    }

    Rng rng(10);
    std::vector<Parameter<double>> sink;
    detail::LayerFactory<double> factory(rng, sink);
    const auto gate = factory.conv("gate", 2, 3, 1);
    const auto f = gdd::test::random_tensor(rng, Shape{3, 6, 6});
    auto src = gdd::test::random_tensor(rng, Shape{2, 6, 6});
    o.require(uru(constant(f), constant(src), gate, 0.1, GateMode::forced_ones).value() == f, "forced-ones uru");
    o.require(fru(constant(f), constant(src), gate, 0.1, GateMode::forced_ones).value() == f, "forced-ones fru");

    // Perturb one guidance pixel; only that pixel's gate values may move.
    const auto before = attention_gate(constant(src), gate, 0.1).value();
    src(0, 2, 3) += 0.7;
    src(1, 2, 3) -= 0.4;
    const auto after = attention_gate(constant(src), gate, 0.1).value();
    bool local = true, moved = false;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 6; ++y)
            for (std::size_t x = 0; x < 6; ++x) {
                const bool diff = after(c, y, x) != before(c, y, x);
                if (y == 2 && x == 3) moved = moved || diff;
                else local = local && !diff;
            }
    o.require(local && moved, "locality probe");
    o.note("K=2,3,4 ladders, gates in (0,1), forced-ones identity, single-pixel locality");
    return o;
}

Outcome io_bit_exactness() {
    Outcome o;
    const fs::path dir = fs::temp_directory_path() / "gdd_acceptance_io";
    fs::remove_all(dir);
    fs::create_directories(dir);
    Rng rng(8);
    Tensor<float> t(Shape{3, 8, 8});
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-3.0, 3.0));
    write_tensor(dir / "t.btf", t);
    const auto back = read_tensor<float>(dir / "t.btf");
    bool same = back.shape() == t.shape();
    for (std::size_t i = 0; same && i < t.size(); ++i)
        same = std::bit_cast<std::uint32_t>(back[i]) == std::bit_cast<std::uint32_t>(t[i]);
    o.require(same, "tensor round trip");

    const Tensor<double> g(Shape{1, 1, 4}, std::vector<double>{0.0, 0.5, 1.0, 1.3});
    write_pgm(dir / "q.pgm", g);
    const auto bytes = slurp(dir / "q.pgm");
    const std::string expected = std::string("P5\n4 1\n255\n") + '\x00' + '\x80' + '\xff' + '\xff';
    o.require(bytes == expected, "pgm bytes for {0, 0.5, 1.0, 1.3}");
    fs::remove_all(dir);
    o.note("round trip bit-identical, quantized {0, 0.5, 1.0, 1.3} -> {0, 128, 255, 255}");
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient integrity", gradient_integrity},
        {"metric oracle equivalence", metric_oracles},
        {"loss consistency", loss_consistency},
        {"desk-scale hs super-resolution", hs_super_resolution},
        {"pansharpening variant ranks", pansharpening_ranks},
        {"determinism", determinism},
        {"architecture invariants", architecture_invariants},
        {"i/o bit-exactness", io_bit_exactness},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failures += o.pass ? 0 : 1;
        std::printf("[%s] criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
