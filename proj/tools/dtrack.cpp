// dtrack: operator front end for the occupancy tracking pipeline.
//
//   gen     simulate sequences and write a DTDS dataset
//   train   fit the tracker on a dataset (supervised or unsupervised)
//   filter  stream a trained model over a sequence, write probability frames
//   eval    metrics against ground truth and baselines, optional rendering
//   render  observation | prediction | truth panels as PGM frames
//
// Exit codes: 0 success, 1 usage error, 2 runtime error. DT_SEED overrides
// --seed when set; otherwise --seed wins over any seed found in a config.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dt/dataset.hpp"
#include "dt/eval.hpp"
#include "dt/pipeline.hpp"
#include "dt/rng.hpp"
#include "dt/tracker.hpp"
#include "dt/trainer.hpp"
#include "dt/world.hpp"

namespace fs = std::filesystem;

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           std::uint64_t config_fallback) {
    if (const char* env = std::getenv("DT_SEED")) return std::stoull(env);
    if (flag) return *flag;
    return config_fallback;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << text;
    if (!out) throw std::runtime_error(path + ": write failed");
}

dt::Observation observation_at(const dt::Dataset& data, int seq, int t) {
    dt::Observation obs(data.grid_h, data.grid_w);
    const std::uint8_t* vis = data.v(seq, t);
    const std::uint8_t* occ = data.r(seq, t);
    std::copy(vis, vis + data.cells(), obs.visible.cells.begin());
    std::copy(occ, occ + data.cells(), obs.occupied.cells.begin());
    return obs;
}

dt::ByteGrid truth_at(const dt::Dataset& data, int seq, int t) {
    dt::ByteGrid y(data.grid_h, data.grid_w);
    const std::uint8_t* p = data.y(seq, t);
    std::copy(p, p + data.cells(), y.cells.begin());
    return y;
}

dt::Image probability_image(const dt::Tensor& p) {
    dt::Image img(p.h(), p.w());
    for (int i = 0; i < p.h(); ++i)
        for (int j = 0; j < p.w(); ++j) {
            const double v = std::min(1.0, std::max(0.0, p(i, j, 0)));
            img.at(i, j) = static_cast<std::uint8_t>(std::llround(v * 255.0));
        }
    return img;
}

std::string frame_name(int seq, int t) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "seq%04d_t%04d.pgm", seq, t);
    return buf;
}

// ---- gen ----------------------------------------------------------------

struct GenArgs {
    std::string config_path, out_path;
    int sequences = 0, length = 0, threads = 1;
    std::optional<std::uint64_t> seed;
    double noise = 0.0;
    bool no_truth = false;
    std::optional<int> min_objects, max_objects;
    std::optional<std::string> shape;
};

void run_gen(const GenArgs& a) {
    dt::WorldConfig world;
    if (!a.config_path.empty()) world = dt::world_config_from_json(read_text(a.config_path));
    if (a.min_objects) world.min_objects = *a.min_objects;
    if (a.max_objects) world.max_objects = *a.max_objects;
    if (a.shape) {
        if (*a.shape == "circle") world.shape = dt::Shape::circle;
        else if (*a.shape == "square") world.shape = dt::Shape::square;
        else throw std::runtime_error("gen: unknown shape \"" + *a.shape + "\"");
    }
    world.validate();

    dt::SensorConfig sensor;
    sensor.noise_rate = a.noise;
    const std::uint64_t master = resolve_seed(a.seed, world.seed);
    const dt::Dataset data = dt::generate_dataset(world, sensor, a.sequences, a.length, master,
                                                  !a.no_truth, a.threads);
    dt::write_dataset(a.out_path, data);
    std::printf("wrote %s: %d sequences x %d steps, %dx%d grid, %s, seed %llu\n",
                a.out_path.c_str(), data.n_sequences, data.seq_len, data.grid_h, data.grid_w,
                data.has_ground_truth ? "with ground truth" : "observations only",
                static_cast<unsigned long long>(master));
}

// ---- train --------------------------------------------------------------

struct TrainArgs {
    std::string data_path, out_path, mode = "unsupervised";
    std::string loss_csv, init_checkpoint;
    int iters = 50000, bptt = 40, dropout_len = 10, checkpoint_every = 0;
    double lr = 0.9, duty = 0.5, init_scale = 1.0, recurrent_gain = 0.0;
    std::optional<std::uint64_t> seed;
    bool full_sequence = false, sum_loss = false, b0_per_cell = false;
};

void run_train(const TrainArgs& a) {
    const dt::Dataset data = dt::read_dataset(a.data_path);

    dt::TrainConfig cfg;
    if (a.mode == "supervised") cfg.mode = dt::TrainMode::supervised;
    else if (a.mode == "unsupervised") cfg.mode = dt::TrainMode::unsupervised;
    else throw std::runtime_error("train: unknown mode \"" + a.mode + "\"");
    cfg.lr = a.lr;
    cfg.iterations = a.iters;
    cfg.bptt_len = a.bptt;
    cfg.dropout_len = a.dropout_len;
    cfg.dropout_duty = a.duty;
    cfg.seed = resolve_seed(a.seed, 0);
    cfg.init_scale = a.init_scale;
    cfg.recurrent_gain = a.recurrent_gain;
    cfg.full_sequence = a.full_sequence;
    cfg.sum_loss = a.sum_loss;
    cfg.checkpoint_interval = a.checkpoint_every;
    cfg.checkpoint_prefix = fs::path(a.out_path).replace_extension().string();

    dt::TrainResult result;
    if (!a.init_checkpoint.empty()) {
        result = dt::train(data, cfg,
                           dt::load_tracker(a.init_checkpoint, data.grid_h, data.grid_w));
    } else if (a.b0_per_cell) {
        dt::TrackerArch arch;
        arch.grid_h = data.grid_h;
        arch.grid_w = data.grid_w;
        arch.per_cell_b0 = true;
        result = dt::train(data, cfg,
                           dt::init_params(arch, cfg.seed, cfg.init_scale, cfg.recurrent_gain));
    } else {
        result = dt::train(data, cfg);
    }

    dt::save_tracker(a.out_path, result.params);
    const std::string csv = a.loss_csv.empty()
                                ? fs::path(a.out_path).replace_extension().string() + ".loss.csv"
                                : a.loss_csv;
    dt::write_loss_csv(csv, result.loss_curve);
    std::printf("wrote %s and %s (%d iterations, final loss %.6f)\n", a.out_path.c_str(),
                csv.c_str(), a.iters,
                result.loss_curve.empty() ? 0.0 : result.loss_curve.back());
}

// ---- filter -------------------------------------------------------------

struct FilterArgs {
    std::string data_path, model_path, out_dir;
    int seq = 0, predict = 0;
};

void run_filter(const FilterArgs& a) {
    const dt::Dataset data = dt::read_dataset(a.data_path);
    if (a.seq < 0 || a.seq >= data.n_sequences)
        throw std::runtime_error("filter: sequence index out of range");
    const dt::TrackerParams params = dt::load_tracker(a.model_path, data.grid_h, data.grid_w);

    std::vector<dt::Observation> observations;
    observations.reserve(data.seq_len);
    for (int t = 0; t < data.seq_len; ++t) observations.push_back(observation_at(data, a.seq, t));

    std::vector<dt::Tensor> probs = dt::filter_stream(params, observations);
    if (a.predict > 0) {
        std::vector<dt::Tensor> future = dt::predict_future(params, observations, a.predict);
        for (auto& p : future) probs.push_back(std::move(p));
    }

    fs::create_directories(a.out_dir);
    std::string index;
    for (std::size_t t = 0; t < probs.size(); ++t) {
        const std::string name = frame_name(a.seq, static_cast<int>(t));
        dt::write_pgm((fs::path(a.out_dir) / name).string(), probability_image(probs[t]));
        index += name + "\n";
    }
    write_text((fs::path(a.out_dir) / "index.txt").string(), index);
    std::printf("wrote %zu probability frames to %s\n", probs.size(), a.out_dir.c_str());
}

// ---- eval ---------------------------------------------------------------

struct EvalArgs {
    std::string data_path, model_path, report_path, render_dir;
    bool dropped = false;
    int dropout_len = 10;
    double duty = 0.5;
    std::uint64_t dropout_seed = 0;
};

void run_eval(const EvalArgs& a) {
    const dt::Dataset data = dt::read_dataset(a.data_path);
    const dt::TrackerParams params = dt::load_tracker(a.model_path, data.grid_h, data.grid_w);

    const dt::EvalReport report = dt::evaluate(params, data);
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(dt::report_to_json(report));
    if (a.dropped) {
        const dt::DroppedEval d =
            dt::evaluate_dropped(params, data, a.dropout_len, a.duty, a.dropout_seed);
        j["dropped_eval"] = {{"masked_bce", d.model_bce},
                             {"copy_last", d.copy_last_bce},
                             {"constant_prior", d.constant_prior_bce},
                             {"graded_cells", d.graded_cells},
                             {"dropout_len", a.dropout_len},
                             {"duty", a.duty},
                             {"seed", a.dropout_seed}};
    }
    write_text(a.report_path, j.dump(2) + "\n");

    if (!a.render_dir.empty()) {
        fs::create_directories(a.render_dir);
        std::string index;
        for (int s = 0; s < data.n_sequences; ++s) {
            std::vector<dt::Observation> observations;
            observations.reserve(data.seq_len);
            for (int t = 0; t < data.seq_len; ++t)
                observations.push_back(observation_at(data, s, t));
            const std::vector<dt::Tensor> probs = dt::filter_stream(params, observations);
            for (int t = 0; t < data.seq_len; ++t) {
                const dt::ByteGrid truth = truth_at(data, s, t);
                const std::string name = frame_name(s, t);
                dt::write_pgm((fs::path(a.render_dir) / name).string(),
                              dt::render_frame(observations[t], probs[t], &truth));
                index += name + "\n";
            }
        }
        write_text((fs::path(a.render_dir) / "index.txt").string(), index);
    }
    std::printf("wrote %s (model occluded bce %.6f, copy_last %.6f, constant_prior %.6f)\n",
                a.report_path.c_str(), report.model.masked_bce_occluded,
                report.copy_last.masked_bce_occluded, report.constant_prior.masked_bce_occluded);
}

// ---- render -------------------------------------------------------------

struct RenderArgs {
    std::string data_path, model_path, out_dir;
    int seq = 0;
    std::optional<int> limit;
};

void run_render(const RenderArgs& a) {
    const dt::Dataset data = dt::read_dataset(a.data_path);
    if (a.seq < 0 || a.seq >= data.n_sequences)
        throw std::runtime_error("render: sequence index out of range");
    const dt::TrackerParams params = dt::load_tracker(a.model_path, data.grid_h, data.grid_w);

    const int frames = a.limit ? std::min(*a.limit, data.seq_len) : data.seq_len;
    std::vector<dt::Observation> observations;
    observations.reserve(data.seq_len);
    for (int t = 0; t < data.seq_len; ++t) observations.push_back(observation_at(data, a.seq, t));
    const std::vector<dt::Tensor> probs = dt::filter_stream(params, observations);

    fs::create_directories(a.out_dir);
    std::string index;
    for (int t = 0; t < frames; ++t) {
        dt::ByteGrid truth;
        const dt::ByteGrid* truth_ptr = nullptr;
        if (data.has_ground_truth) {
            truth = truth_at(data, a.seq, t);
            truth_ptr = &truth;
        }
        const std::string name = frame_name(a.seq, t);
        dt::write_pgm((fs::path(a.out_dir) / name).string(),
                      dt::render_frame(observations[t], probs[t], truth_ptr));
        index += name + "\n";
    }
    write_text((fs::path(a.out_dir) / "index.txt").string(), index);
    std::printf("wrote %d frames to %s\n", frames, a.out_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"occupancy tracking pipeline"};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen", "simulate sequences into a dataset");
    gen_cmd->add_option("--config", gen.config_path, "world config JSON");
    gen_cmd->add_option("--sequences", gen.sequences, "number of sequences")->required();
    gen_cmd->add_option("--length", gen.length, "steps per sequence")->required();
    gen_cmd->add_option("--out", gen.out_path, "output dataset path")->required();
    gen_cmd->add_option("--seed", gen.seed, "master seed (DT_SEED overrides)");
    gen_cmd->add_option("--noise", gen.noise, "sensor flip probability on visible cells");
    gen_cmd->add_option("--min-objects", gen.min_objects, "override config min_objects");
    gen_cmd->add_option("--max-objects", gen.max_objects, "override config max_objects");
    gen_cmd->add_option("--shape", gen.shape, "override config shape (circle|square)");
    gen_cmd->add_option("--threads", gen.threads, "worker cap for generation");
    gen_cmd->add_flag("--no-truth", gen.no_truth, "omit the ground-truth channel");

    TrainArgs train;
    CLI::App* train_cmd = app.add_subcommand("train", "fit the tracker on a dataset");
    train_cmd->add_option("--data", train.data_path, "training dataset")->required();
    train_cmd->add_option("--out", train.out_path, "output checkpoint path")->required();
    train_cmd->add_option("--mode", train.mode, "supervised|unsupervised (default unsupervised)");
    train_cmd->add_option("--iters", train.iters, "SGD iterations (default 50000)");
    train_cmd->add_option("--lr", train.lr, "learning rate (default 0.9)");
    train_cmd->add_option("--bptt", train.bptt, "gradient window length (default 40)");
    train_cmd->add_option("--dropout-len", train.dropout_len, "dropped block length (default 10)");
    train_cmd->add_option("--duty", train.duty, "fraction of steps dropped (default 0.5)");
    train_cmd->add_option("--seed", train.seed, "training seed (DT_SEED overrides)");
    train_cmd->add_option("--init-scale", train.init_scale, "kernel init scale (default 1.0)");
    train_cmd->add_option("--recurrent-gain", train.recurrent_gain,
                          "identity-style belief self-tap at init (default 0 = off)");
    train_cmd->add_option("--loss-csv", train.loss_csv, "loss curve path (default <out>.loss.csv)");
    train_cmd->add_option("--init", train.init_checkpoint, "start from this checkpoint");
    train_cmd->add_option("--checkpoint-every", train.checkpoint_every,
                          "periodic checkpoint interval (0 = off)");
    train_cmd->add_flag("--full-sequence", train.full_sequence,
                        "backpropagate through whole sequences");
    train_cmd->add_flag("--sum-loss", train.sum_loss, "raw summed loss instead of means");
    train_cmd->add_flag("--b0-per-cell", train.b0_per_cell,
                        "learn a full per-cell initial belief");

    FilterArgs filter;
    CLI::App* filter_cmd = app.add_subcommand("filter", "stream a model over one sequence");
    filter_cmd->add_option("--data", filter.data_path, "dataset")->required();
    filter_cmd->add_option("--model", filter.model_path, "checkpoint")->required();
    filter_cmd->add_option("--out", filter.out_dir, "output frame directory")->required();
    filter_cmd->add_option("--seq", filter.seq, "sequence index (default 0)");
    filter_cmd->add_option("--predict", filter.predict,
                           "extra future steps with empty observations");

    EvalArgs eval;
    CLI::App* eval_cmd = app.add_subcommand("eval", "metrics against ground truth");
    eval_cmd->add_option("--data", eval.data_path, "evaluation dataset")->required();
    eval_cmd->add_option("--model", eval.model_path, "checkpoint")->required();
    eval_cmd->add_option("--report", eval.report_path, "output report JSON")->required();
    eval_cmd->add_option("--render", eval.render_dir, "also render frames into this directory");
    eval_cmd->add_flag("--dropped", eval.dropped, "add the observation-dropout protocol metrics");
    eval_cmd->add_option("--dropout-len", eval.dropout_len, "dropped block length (default 10)");
    eval_cmd->add_option("--duty", eval.duty, "fraction of steps dropped (default 0.5)");
    eval_cmd->add_option("--dropout-seed", eval.dropout_seed, "dropout schedule seed");

    RenderArgs render;
    CLI::App* render_cmd = app.add_subcommand("render", "observation|prediction|truth frames");
    render_cmd->add_option("--data", render.data_path, "dataset")->required();
    render_cmd->add_option("--model", render.model_path, "checkpoint")->required();
    render_cmd->add_option("--out", render.out_dir, "output frame directory")->required();
    render_cmd->add_option("--seq", render.seq, "sequence index (default 0)");
    render_cmd->add_option("--limit", render.limit, "render at most this many frames");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen_cmd) run_gen(gen);
        else if (*train_cmd) run_train(train);
        else if (*filter_cmd) run_filter(filter);
        else if (*eval_cmd) run_eval(eval);
        else if (*render_cmd) run_render(render);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "dtrack: %s\n", e.what());
        return 2;
    }
    return 0;
}
