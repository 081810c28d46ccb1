// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/flow.hpp"

#include <fstream>

#include "fontcraft/png_io.hpp"

namespace fontcraft::flow {

using nlohmann::json;

std::vector<LoadedTriplet> load_triplets(const synthdata::DatasetManifest& manifest,
                                         const std::string& kind_filter, const std::string& split) {
    std::vector<LoadedTriplet> out;
    for (const auto& r : manifest.records) {
        if (!kind_filter.empty() && r.kind != kind_filter) continue;
        if (!split.empty() && r.split != split) continue;
        LoadedTriplet t;
        t.input = read_png_rgb(r.input_path);
        t.mask = threshold_mask(read_png_gray(r.glyph_mask_path), 0.5f);
        t.gt = read_png_rgb(r.gt_path);
        out.push_back(std::move(t));
    }
    return out;
}

double fixed_eval_loss(Denoiser<float>& model, const std::vector<LoadedTriplet>& data,
                       uint64_t seed) {
    constexpr int kGrid = 8;
    double acc = 0.0;
    int n = 0;
    Rng root(seed);
    for (size_t d = 0; d < data.size(); ++d) {
        const TensorT<float> x0 = field_from_image<float>(data[d].gt);
        for (int i = 0; i < kGrid; ++i) {
            Rng rng = root.fork(hash_combine(d, uint64_t(i)));
            FlowSample<float> s;
            s.x0 = x0;
            s.t = float((i + 0.5) / kGrid);
            s.eps = TensorT<float>(x0.shape);
            for (auto& e : s.eps.v) e = float(rng.normal());
            s.x_t = TensorT<float>(x0.shape);
            s.u = TensorT<float>(x0.shape);
            for (int64_t j = 0; j < x0.numel(); ++j) {
                s.x_t.v[j] = (1.f - s.t) * x0.v[j] + s.t * s.eps.v[j];
                s.u.v[j] = s.eps.v[j] - x0.v[j];
            }
            Graph<float> g;
            g.recording = false;
            acc += double(g.val(fm_loss_node(g, model, s, data[d].input, data[d].mask)).v[0]);
            ++n;
        }
    }
    return acc / n;
}

TrainResult train(Denoiser<float>& model, AdapterSet<float>* adapter,
                  const std::vector<LoadedTriplet>& data, const TrainConfig& config) {
    if (data.empty()) throw ConfigError("train: empty dataset");
    if (config.batch < 1 || config.steps < 0) throw ConfigError("train: bad batch/steps");

    model.attach(adapter);
    TrainResult result;
    result.stats = select_trainable(model, adapter);

    Adam<float> opt;
    opt.lr = config.lr;
    opt.beta1 = config.beta1;
    opt.beta2 = config.beta2;
    opt.eps = config.adam_eps;

    ParamStore<float>& tstore = adapter ? adapter->params : model.params;
    Rng batch_rng = Rng(config.seed).fork("batch");
    Rng noise_root = Rng(config.seed).fork("noise");

    const uint64_t eval_seed = hash_combine(config.seed, hash_str("eval"));
    result.initial_eval = fixed_eval_loss(model, data, eval_seed);

    std::vector<TensorT<float>> x0_fields;
    x0_fields.reserve(data.size());
    for (const auto& t : data) x0_fields.push_back(field_from_image<float>(t.gt));

    for (int step = 0; step < config.steps; ++step) {
        tstore.zero_grads();
        double batch_loss = 0.0;
        for (int b = 0; b < config.batch; ++b) {
            const int idx = int(batch_rng.uniform_int(0, int64_t(data.size()) - 1));
            Rng nrng = noise_root.fork(hash_combine(uint64_t(step), uint64_t(b)));
            const FlowSample<float> sample = make_flow_sample(x0_fields[idx], nrng);
            Graph<float> g;
            const NodeId loss = fm_loss_node(g, model, sample, data[idx].input, data[idx].mask);
            const double lv = double(g.val(loss).v[0]);
            if (!std::isfinite(lv))
                throw VerifyError("train: non-finite loss at step " + std::to_string(step) +
                                  " (sample " + std::to_string(idx) + ", t=" +
                                  std::to_string(sample.t) + ")");
            batch_loss += lv;
            g.backward(loss);
        }
        opt.step(tstore, 1.0 / config.batch);
        result.loss_curve.push_back(batch_loss / config.batch);
        result.steps_run = step + 1;

        if (config.eval_every > 0 && config.target_loss > 0.0 &&
            (step + 1) % config.eval_every == 0) {
            if (fixed_eval_loss(model, data, eval_seed) <= config.target_loss) break;
        }
    }

    result.final_eval = fixed_eval_loss(model, data, eval_seed);
    return result;
}

void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write loss curve: " + path);
    f << "step,loss\n";
    for (size_t i = 0; i < curve.size(); ++i) f << i << "," << curve[i] << "\n";
}

// ---- persistence -----------------------------------------------------------

void save_base_checkpoint(const std::string& path, const Denoiser<float>& model,
                          const json& extra_meta) {
    json meta = extra_meta.is_object() ? extra_meta : json::object();
    meta["format"] = "fontcrafter-base";
    meta["model"] = model.cfg.to_json();
    nn::save_checkpoint(path, model.params, meta);
}

Denoiser<float> load_base_checkpoint(const std::string& path) {
    nn::LoadedCheckpoint ck = nn::load_checkpoint(path);
    if (ck.meta.value("format", "") != "fontcrafter-base")
        throw KindError("not a base checkpoint: " + path);
    const DenoiserConfig cfg = DenoiserConfig::from_json(ck.meta.at("model"));
    return Denoiser<float>::from_store(cfg, std::move(ck.store));
}

void save_adapter(const std::string& path, const AdapterSet<float>& adapter,
                  const DenoiserConfig& cfg, const json& extra_meta) {
    json meta = extra_meta.is_object() ? extra_meta : json::object();
    meta["format"] = "fontcrafter-adapter";
    meta["kind"] = mmdit::to_string(adapter.kind);
    meta["rank"] = adapter.rank;
    meta["alpha"] = adapter.alpha;
    meta["model"] = cfg.to_json();
    nn::save_checkpoint(path, adapter.params, meta);
}

AdapterSet<float> load_adapter(const std::string& path, const DenoiserConfig& expect) {
    nn::LoadedCheckpoint ck = nn::load_checkpoint(path);
    if (ck.meta.value("format", "") != "fontcrafter-adapter")
        throw KindError("not an adapter checkpoint: " + path);
    AdapterSet<float> a;
    a.kind = mmdit::adapter_kind_from_string(ck.meta.at("kind").get<std::string>());
    a.rank = ck.meta.at("rank");
    a.alpha = ck.meta.at("alpha");
    const DenoiserConfig cfg = DenoiserConfig::from_json(ck.meta.at("model"));
    if (!cfg.same_architecture(expect))
        throw ShapeError("adapter was trained for a different model architecture: " + path);
    a.params = std::move(ck.store);
    return a;
}

}  // namespace fontcraft::flow
