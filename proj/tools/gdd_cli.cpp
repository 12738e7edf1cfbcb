#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "gdd/gdd.hpp"

namespace fs = std::filesystem;
using namespace gdd;

namespace {

enum Exit { kOk = 0, kFailure = 1, kValidation = 2, kNumerical = 3 };

struct FuseArgs {
    std::string task = "hs-sr";
    std::string input, guidance, reference, srf;
    std::string variant = "gdd";
    std::size_t iters = 5000;
    double lr = 0.01;
    double mu = 1.0;
    bool auto_mu = false;
    std::uint64_t seed = 0;
    std::size_t scales = 4;
    std::size_t channels = 64;
    std::size_t eval_every = 50;
    std::string out;
};

std::size_t spatial_factor(const Tensor<double>& y, const Tensor<double>& g) {
    if (y.height() == 0 || g.height() % y.height() != 0 || g.width() % y.width() != 0 ||
        g.height() / y.height() != g.width() / y.width()) {
        throw ShapeError("guidance " + to_string(g.shape()) + " is not an integer upscaling of input " + to_string(y.shape()));
    }
    return g.height() / y.height();
}

int run_fuse(const FuseArgs& a) {
    const Task task = parse_task(a.task);
    RunConfig run;
    run.task = task;
    run.variant = parse_variant(a.variant);
    run.iterations = a.iters;
    run.lr = a.lr;
    run.mu = a.mu;
    run.seed = a.seed;
    run.eval_every = std::min(a.eval_every, a.iters);
    run.output_dir = a.out;
    run.auto_balance_mu = a.auto_mu;
    run.validate();

    NetworkConfig net;
    net.scales = a.scales;
    net.base_channels = a.channels;
    net.guidance_channels = a.channels;

    auto y = read_tensor<double>(a.input);
    auto g = read_tensor<double>(a.guidance);
    std::optional<Tensor<double>> ref;
    if (!a.reference.empty()) ref = read_tensor<double>(a.reference);

    std::optional<SpectralResponse> response;
    TaskData<double> data;
    switch (task) {
        case Task::hs_sr: {
            const std::size_t f = spatial_factor(y, g);
            if (!a.srf.empty()) {
                auto srf = read_srf_csv(a.srf, y.channels());
                for (const auto& w : srf.warnings) std::cerr << "warning: " << w << '\n';
                response = srf.response;
            } else {
                response = SpectralResponse::contiguous_groups(y.channels(), g.channels());
            }
            data = hs_sr_task(y, g, SpatialDownsampler(DownsampleKind::block_average, f), *response, ref);
            break;
        }
        case Task::pansharpen:
            data = pansharpen_task(y, g, SpatialDownsampler(DownsampleKind::bicubic, spatial_factor(y, g)), ref);
            break;
        case Task::denoise: data = denoise_task(y, g, ref); break;
    }
    if (ref && ref->shape() != data.output_shape()) {
        throw ShapeError("reference " + to_string(ref->shape()) + " does not match output " + to_string(data.output_shape()));
    }

    auto model = make_model(run.variant, net, data);
    BoundLoss<double> loss(data, run.mu);
    RunResult<double> result;
    try {
        result = optimize(model, loss, data.guidance, run, data.reference);
    } catch (const OptimizationAborted& e) {
        fs::create_directories(a.out);
        write_trace_csv(fs::path(a.out) / "trace.csv", e.trace());
        throw;
    }

    const fs::path dir(a.out);
    std::vector<AttentionMap<double>> maps;
    if (run.variant == Variant::gdd) maps = model.export_attention_maps(data.guidance);
    const SpectralResponse* display = response && response->out_bands() == 3 ? &*response : nullptr;
    export_results(dir, result.output, ref ? &*ref : nullptr, &maps, display);
    write_trace_csv(dir / "trace.csv", result.trace);
    if (ref) write_metric_report(dir / "metrics.csv", full_reference_report(result.output, *ref, data.downsampler ? data.downsampler->factor() : 1));

    const auto& last = result.trace.rows.back();
    std::printf("iterations %zu  loss %.6g -> %.6g  mu %.6g", run.iterations, result.initial_loss, last.loss_total, result.mu);
    if (last.psnr) std::printf("  psnr %.3f dB", *last.psnr);
    std::printf("\n");
    return kOk;
}

int run_degrade(const std::string& hr_path, std::size_t factor, const std::string& kind_name, const std::string& srf_path,
                const std::string& out) {
    DownsampleKind kind;
    if (kind_name == "block") kind = DownsampleKind::block_average;
    else if (kind_name == "bicubic") kind = DownsampleKind::bicubic;
    else if (kind_name == "gaussian") kind = DownsampleKind::gaussian;
    else throw ValidationError("unknown kind '" + kind_name + "' (expected block|bicubic|gaussian)");

    const auto hr = read_tensor<double>(hr_path);
    std::optional<SpectralResponse> response;
    if (!srf_path.empty()) {
        auto srf = read_srf_csv(srf_path, hr.channels());
        for (const auto& w : srf.warnings) std::cerr << "warning: " << w << '\n';
        response = srf.response;
    } else {
        response = SpectralResponse::band_mean(hr.channels());
    }
    const auto t = wald_protocol(hr, *response, factor, kind);
    const fs::path dir(out);
    fs::create_directories(dir);
    write_tensor(dir / "input.btf", t.input);
    write_tensor(dir / "guidance.btf", t.guidance);
    write_tensor(dir / "reference.btf", t.reference);
    write_srf_csv(dir / "srf.csv", *response);
    std::printf("input %s  guidance %s  reference %s\n", to_string(t.input.shape()).c_str(),
                to_string(t.guidance.shape()).c_str(), to_string(t.reference.shape()).c_str());
    return kOk;
}

int run_metrics(const std::string& fused_path, const std::string& ref_path, const std::string& ms_low_path,
                const std::string& pan_path, std::size_t ratio, const std::string& out) {
    if (ms_low_path.empty() != pan_path.empty()) throw ValidationError("--ms-low and --pan must be given together");
    const auto fused = read_tensor<double>(fused_path);
    const auto ref = read_tensor<double>(ref_path);
    MetricReport report = full_reference_report(fused, ref, ratio);
    if (!ms_low_path.empty()) add_no_reference(report, fused, read_tensor<double>(ms_low_path), read_tensor<double>(pan_path), ratio);
    write_metric_report(out, report);
    for (auto name : kMetricOrder) {
        if (auto v = report.get(name)) std::printf("%-11s %.6g\n", std::string(name).c_str(), *v);
    }
    return kOk;
}

int run_gradcheck(std::uint64_t seed) {
    bool ok = true;
    for (const auto& r : run_gradcheck_suite(seed)) {
        std::printf("%-4s %-22s max_rel_err %.3e  tol %.0e  entries %zu\n", r.passed() ? "ok" : "FAIL", r.name.c_str(),
                    r.max_error, r.tolerance, r.entries);
        ok = ok && r.passed();
    }
    return ok ? kOk : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Guided deep decoder image fusion"};
    app.require_subcommand(1);

    FuseArgs fa;
    auto* fuse = app.add_subcommand("fuse", "Optimise a network on one image pair");
    fuse->add_option("--task", fa.task, "hs-sr | pansharpen | denoise")->capture_default_str();
    fuse->add_option("--input", fa.input, "Observed image Y")->required();
    fuse->add_option("--guidance", fa.guidance, "Guidance image G")->required();
    fuse->add_option("--reference", fa.reference, "Ground truth for PSNR tracking");
    fuse->add_option("--srf", fa.srf, "Spectral response CSV (hs-sr)");
    fuse->add_option("--variant", fa.variant, "gdd | dd | dip-z | dip-g")->capture_default_str();
    fuse->add_option("--iters", fa.iters)->capture_default_str();
    fuse->add_option("--lr", fa.lr)->capture_default_str();
    fuse->add_option("--mu", fa.mu)->capture_default_str();
    fuse->add_flag("--auto-mu", fa.auto_mu, "Balance both loss terms at iteration 0");
    fuse->add_option("--seed", fa.seed)->capture_default_str();
    fuse->add_option("--scales", fa.scales)->capture_default_str();
    fuse->add_option("--channels", fa.channels)->capture_default_str();
    fuse->add_option("--eval-every", fa.eval_every)->capture_default_str();
    fuse->add_option("--out", fa.out)->required();

    std::string hr, kind = "block", srf, dout;
    std::size_t factor = 4;
    auto* degrade = app.add_subcommand("degrade", "Build a reduced-resolution triplet from a full-resolution image");
    degrade->add_option("--hr", hr)->required();
    degrade->add_option("--factor", factor)->capture_default_str();
    degrade->add_option("--kind", kind, "block | bicubic | gaussian")->capture_default_str();
    degrade->add_option("--srf", srf, "Spectral response CSV; default is the band mean");
    degrade->add_option("--out", dout)->required();

    std::string fused, mref, ms_low, pan, mout;
    std::size_t ratio = 4;
    auto* metrics = app.add_subcommand("metrics", "Quality metrics for a fused image");
    metrics->add_option("--fused", fused)->required();
    metrics->add_option("--reference", mref)->required();
    metrics->add_option("--ms-low", ms_low);
    metrics->add_option("--pan", pan);
    metrics->add_option("--ratio", ratio)->capture_default_str();
    metrics->add_option("--out", mout)->required();

    std::uint64_t sseed = 0;
    std::size_t schannels = 8, ssize = 64;
    std::string sout;
    auto* synth = app.add_subcommand("synth", "Write a synthetic scene");
    synth->add_option("--seed", sseed)->capture_default_str();
    synth->add_option("--channels", schannels)->capture_default_str();
    synth->add_option("--size", ssize)->capture_default_str();
    synth->add_option("--out", sout)->required();

    std::uint64_t gseed = 0;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    gradcheck->add_option("--seed", gseed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (*fuse) return run_fuse(fa);
        if (*degrade) return run_degrade(hr, factor, kind, srf, dout);
        if (*metrics) return run_metrics(fused, mref, ms_low, pan, ratio, mout);
        if (*synth) {
            write_tensor(sout, synth_scene<double>(sseed, schannels, ssize));
            return kOk;
        }
        if (*gradcheck) return run_gradcheck(gseed);
    } catch (const std::invalid_argument& e) {  // ShapeError, ValidationError
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
