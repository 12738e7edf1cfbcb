#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gdd/io.hpp"
#include "gdd/losses.hpp"
#include "gdd/metrics.hpp"
#include "gdd/network.hpp"
#include "gdd/optim.hpp"
#include "gdd/trace.hpp"

namespace gdd {

// One observed image pair plus the operators its loss needs.
template <class Real>
struct TaskData {
    Task task = Task::hs_sr;
    Tensor<Real> input;              // Y
    Tensor<Real> guidance;           // G, fed to the network
    Tensor<Real> guidance_expanded;  // pansharpening: G replicated to C bands
    std::optional<SpatialDownsampler> downsampler;
    std::optional<SpectralResponse> response;
    std::optional<Tensor<Real>> reference;

    Shape output_shape() const { return {input.channels(), guidance.height(), guidance.width()}; }
};

template <class Real>
TaskData<Real> hs_sr_task(Tensor<Real> y, Tensor<Real> g, SpatialDownsampler s, SpectralResponse r,
                          std::optional<Tensor<Real>> reference = std::nullopt) {
    if (r.in_bands() != y.channels() || r.out_bands() != g.channels()) {
        throw ShapeError("hs-sr: response " + std::to_string(r.out_bands()) + "x" + std::to_string(r.in_bands()) +
                         " does not map input " + to_string(y.shape()) + " to guidance " + to_string(g.shape()));
    }
    if (s.output_shape(Shape{y.channels(), g.height(), g.width()}) != y.shape()) {
        throw ShapeError("hs-sr: input " + to_string(y.shape()) + " is not the downsampled guidance grid");
    }
    TaskData<Real> d;
    d.task = Task::hs_sr;
    d.input = std::move(y);
    d.guidance = std::move(g);
    d.downsampler = s;
    d.response = std::move(r);
    d.reference = std::move(reference);
    return d;
}

template <class Real>
TaskData<Real> pansharpen_task(Tensor<Real> y, Tensor<Real> pan, SpatialDownsampler s,
                               std::optional<Tensor<Real>> reference = std::nullopt) {
    if (pan.channels() != 1) throw ShapeError("pansharpen: guidance must be a single band, got " + to_string(pan.shape()));
    if (s.output_shape(Shape{y.channels(), pan.height(), pan.width()}) != y.shape()) {
        throw ShapeError("pansharpen: input " + to_string(y.shape()) + " is not the downsampled guidance grid");
    }
    TaskData<Real> d;
    d.task = Task::pansharpen;
    d.guidance_expanded = expand_channels(pan, y.channels());
    d.input = std::move(y);
    d.guidance = std::move(pan);
    d.downsampler = s;
    d.reference = std::move(reference);
    return d;
}

template <class Real>
TaskData<Real> denoise_task(Tensor<Real> y, Tensor<Real> g, std::optional<Tensor<Real>> reference = std::nullopt) {
    if (y.height() != g.height() || y.width() != g.width()) {
        throw ShapeError("denoise: input " + to_string(y.shape()) + " and guidance " + to_string(g.shape()) +
                         " differ in spatial size");
    }
    TaskData<Real> d;
    d.task = Task::denoise;
    d.input = std::move(y);
    d.guidance = std::move(g);
    d.reference = std::move(reference);
    return d;
}

// Task loss bound to its data. Owns the learnable channel weights D for
// pansharpening so they are optimised with the network.
template <class Real>
class BoundLoss {
public:
    BoundLoss(const TaskData<Real>& data, double mu) : data_(&data), mu_(mu) {
        validate_mu(mu);
        if (data.task == Task::pansharpen) extra_.push_back(make_channel_weights<Real>(data.input.channels()));
    }

    double mu() const { return mu_; }
    void set_mu(double mu) {
        validate_mu(mu);
        mu_ = mu;
    }

    std::vector<Parameter<Real>>& parameters() { return extra_; }

    LossTerms<Real> operator()(const Node<Real>& x) const {
        const auto& d = *data_;
        switch (d.task) {
            case Task::hs_sr: return hs_sr_loss(x, d.input, d.guidance, *d.downsampler, *d.response, mu_);
            case Task::pansharpen:
                return pansharpen_loss(x, d.input, d.guidance_expanded, *d.downsampler, extra_.front().node(), mu_);
            case Task::denoise: return denoise_loss(x, d.input);
        }
        throw ValidationError("unknown task");
    }

private:
    const TaskData<Real>* data_;
    double mu_;
    std::vector<Parameter<Real>> extra_;
};

struct RunConfig {
    Task task = Task::hs_sr;
    Variant variant = Variant::gdd;
    std::size_t iterations = 5000;
    double lr = 0.01;
    double mu = 1.0;
    std::uint64_t seed = 0;
    std::size_t eval_every = 50;
    std::filesystem::path output_dir;
    bool auto_balance_mu = false;

    void validate() const {
        if (iterations < 1) throw ValidationError("iterations must be >= 1");
        if (eval_every < 1 || eval_every > iterations) {
            throw ValidationError("eval-every must lie in [1, iterations], got " + std::to_string(eval_every));
        }
        if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be positive");
        validate_mu(mu);
    }
};

template <class Real>
struct RunResult {
    Tensor<Real> output;  // final iterate, not a best-so-far snapshot
    RunTrace trace;
    double initial_loss = 0.0;
    std::optional<double> initial_psnr;
    double mu = 1.0;
};

class OptimizationAborted : public NumericalError {
public:
    OptimizationAborted(std::size_t iteration, RunTrace trace)
        : NumericalError("non-finite loss at iteration " + std::to_string(iteration)), iteration_(iteration),
          trace_(std::move(trace)) {}

    std::size_t iteration() const { return iteration_; }
    const RunTrace& trace() const { return trace_; }

private:
    std::size_t iteration_;
    RunTrace trace_;
};

// Anything with `Node<Real> forward(const Tensor<Real>&) const` and a
// mutable `parameters()` vector.
template <class M, class Real>
concept FusionModel = requires(M& m, const Tensor<Real>& g) {
    { m.forward(g) } -> std::same_as<Node<Real>>;
    { m.parameters() } -> std::same_as<std::vector<Parameter<Real>>&>;
};

// Forward -> loss -> backward -> Adam for `iterations` steps on one image
// pair. Row i of the trace describes the parameters after i updates.
template <class Real, FusionModel<Real> Model>
RunResult<Real> optimize(Model& model, BoundLoss<Real>& loss, const Tensor<Real>& guidance, const RunConfig& run,
                         const std::optional<Tensor<Real>>& reference = std::nullopt) {
    run.validate();
    std::vector<Parameter<Real>> params = model.parameters();
    for (const auto& p : loss.parameters()) params.push_back(p);
    const AdamOptions adam{run.lr, 0.9, 0.999, 1e-8};

    RunResult<Real> result;
    for (std::size_t i = 0;; ++i) {
        Node<Real> x = model.forward(guidance);
        LossTerms<Real> terms = loss(x);
        if (i == 0 && run.auto_balance_mu) {
            const double unweighted = terms.fidelity.value().item() / loss.mu();
            const double other = terms.guidance.value().item();
            if (unweighted > 0.0 && other > 0.0) {
                loss.set_mu(other / unweighted);
                terms = loss(x);
            }
        }
        const double total = terms.total.value().item();
        if (!std::isfinite(total)) throw OptimizationAborted(i, result.trace);
        if (i == 0) {
            result.initial_loss = total;
            if (reference) result.initial_psnr = psnr(x.value(), *reference);
        } else if (i % run.eval_every == 0 || i == run.iterations) {
            TraceRow row{i, total, terms.fidelity.value().item(), terms.guidance.value().item(), std::nullopt};
            if (reference) row.psnr = psnr(x.value(), *reference);
            result.trace.rows.push_back(row);
        }
        if (i == run.iterations) {
            result.output = x.value();
            break;
        }
        backward(terms.total);
        adam_step<Real>(params, adam);
    }
    result.mu = loss.mu();
    return result;
}

template <class Real>
GddModel<Real> make_model(Variant variant, const NetworkConfig& net, const TaskData<Real>& data) {
    return build_variant<Real>(variant, net, data.guidance.shape(), data.input.channels());
}

// Builds the requested variant for the task and runs the loop.
template <class Real>
RunResult<Real> run_task(const TaskData<Real>& data, const RunConfig& run, NetworkConfig net) {
    net.seed = run.seed;
    auto model = make_model(run.variant, net, data);
    BoundLoss<Real> loss(data, run.mu);
    return optimize(model, loss, data.guidance, run, data.reference);
}

template <class Real>
struct VariantRun {
    Variant variant;
    std::uint64_t seed;
    RunResult<Real> result;
};

// Same data, loss, budget, optimiser and seed list for every variant.
template <class Real>
std::vector<VariantRun<Real>> compare_variants(const TaskData<Real>& data, const RunConfig& run, const NetworkConfig& net,
                                               std::span<const Variant> variants, std::span<const std::uint64_t> seeds) {
    std::vector<VariantRun<Real>> runs;
    for (Variant v : variants) {
        for (std::uint64_t seed : seeds) {
            RunConfig rc = run;
            rc.variant = v;
            rc.seed = seed;
            runs.push_back({v, seed, run_task(data, rc, net)});
        }
    }
    return runs;
}

template <class Real>
std::string comparison_csv(const std::vector<VariantRun<Real>>& runs) {
    std::string text = "variant,seed,iteration,loss_total,loss_term1,loss_term2,psnr\n";
    for (const auto& r : runs) {
        for (const auto& row : r.result.trace.rows) {
            text += std::string(to_string(r.variant)) + ',' + std::to_string(r.seed) + ',' + std::to_string(row.iteration) +
                    ',' + detail::format_real(row.loss_total) + ',' + detail::format_real(row.loss_term1) + ',' +
                    detail::format_real(row.loss_term2) + ',' + (row.psnr ? detail::format_real(*row.psnr) : "") + '\n';
        }
    }
    return text;
}

// Three bands for display: the image itself when it has three, a 3-row
// response projection when one is given, otherwise the first bands (the
// last one repeated when fewer than three exist).
template <class Real>
Tensor<Real> rgb_composite(const Tensor<Real>& x, const SpectralResponse* response = nullptr) {
    if (x.channels() == 3) return x;
    if (response && response->out_bands() == 3 && response->in_bands() == x.channels()) return response->apply(x);
    std::vector<std::size_t> bands(3);
    for (std::size_t i = 0; i < 3; ++i) bands[i] = std::min(i, x.channels() - 1);
    return select_channels(x, bands);
}

// Per-pixel absolute error averaged over bands.
template <class Real>
Tensor<Real> absolute_error_map(const Tensor<Real>& x, const Tensor<Real>& ref) {
    require_same_shape(x.shape(), ref.shape(), "absolute_error_map");
    const std::size_t plane = x.shape().plane();
    Tensor<Real> out(Shape{1, x.height(), x.width()});
    for (std::size_t p = 0; p < plane; ++p) {
        Real acc = 0;
        for (std::size_t c = 0; c < x.channels(); ++c) acc += std::abs(x[c * plane + p] - ref[c * plane + p]);
        out[p] = acc / static_cast<Real>(x.channels());
    }
    return out;
}

inline std::string attention_map_filename(std::size_t scale, RefinementUnit unit, std::size_t channel) {
    return "scale" + std::to_string(scale) + "_" + to_string(unit) + "_ch" + std::to_string(channel) + ".pgm";
}

struct ExportedFiles {
    std::vector<std::filesystem::path> files;
};

// Writes output.btf, composite.ppm, and when available error.pgm (+
// error_scale.txt) and attention/*.pgm.
template <class Real>
ExportedFiles export_results(const std::filesystem::path& dir, const Tensor<Real>& x, const Tensor<Real>* reference = nullptr,
                             const std::vector<AttentionMap<Real>>* maps = nullptr,
                             const SpectralResponse* response = nullptr) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    ExportedFiles out;
    auto record = [&](const std::filesystem::path& p) { out.files.push_back(p); };

    write_tensor(dir / "output.btf", x);
    record(dir / "output.btf");
    write_ppm(dir / "composite.ppm", rgb_composite(x, response));
    record(dir / "composite.ppm");

    if (reference) {
        Tensor<Real> err = absolute_error_map(x, *reference);
        Real peak = 0;
        for (Real v : err.data()) peak = std::max(peak, v);
        // byte 255 corresponds to `peak`; an all-zero map stays zero.
        write_pgm(dir / "error.pgm", err, peak > 0 ? static_cast<double>(peak) : 1.0);
        record(dir / "error.pgm");
        detail::write_text(dir / "error_scale.txt", "max_abs_error " + detail::format_real(static_cast<double>(peak)) +
                                                         "\nbyte_255_equals " +
                                                         detail::format_real(static_cast<double>(peak)) + "\n");
        record(dir / "error_scale.txt");
    }
    if (maps && !maps->empty()) {
        const auto adir = dir / "attention";
        std::filesystem::create_directories(adir, ec);
        if (ec) throw IoError("cannot create '" + adir.string() + "': " + ec.message());
        for (const auto& m : *maps) {
            const auto p = adir / attention_map_filename(m.scale, m.unit, m.channel);
            write_pgm(p, m.weights, 1.0);
            record(p);
        }
    }
    return out;
}

}  // namespace gdd
