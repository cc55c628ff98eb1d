// coda: train, tune, and inspect the denoising PKT pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "coda/checkpoint.hpp"
#include "coda/experiment.hpp"
#include "coda/graph.hpp"

namespace fs = std::filesystem;
using namespace coda;

namespace {

std::shared_ptr<EmbeddingProvider> make_provider(const std::string& embeddings_path,
                                                 std::size_t dim) {
    if (!embeddings_path.empty()) {
        std::shared_ptr<FileProvider> fp = load_embeddings(embeddings_path, dim);
        return fp;
    }
    return std::make_shared<HashingProvider>(dim);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw CodaError("cannot open " + path + " for writing");
    out << text;
}

ParamStore load_model_pair(const std::string& backbone_path, const std::string& coda_path) {
    ParamStore backbone = load_checkpoint(backbone_path);
    ParamStore full;
    merge_slots(full, backbone, /*frozen=*/true);
    ParamStore coda_params = load_checkpoint(coda_path);
    merge_slots(full, filter_slots(coda_params, "coda."), /*frozen=*/false);
    return full;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coda: denoising programming knowledge tracing"};
    app.require_subcommand(1);

    std::string config_path, out_path, dataset_path, embeddings_path;
    std::string backbone_path, coda_path, learner_id, dump_dir, bank_dataset;
    std::size_t concept_idx = 0;

    auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic benchmark");
    cmd_synth->add_option("--config", config_path);
    cmd_synth->add_option("--out", out_path)->required();

    auto* cmd_train = app.add_subcommand("train-backbone", "train the PKT backbone");
    cmd_train->add_option("--config", config_path)->required();
    cmd_train->add_option("--dataset", dataset_path);
    cmd_train->add_option("--embeddings", embeddings_path);
    cmd_train->add_option("--out", out_path)->required();

    auto* cmd_tune = app.add_subcommand("tune", "tune the Coda adaptor on a frozen backbone");
    cmd_tune->add_option("--backbone", backbone_path)->required();
    cmd_tune->add_option("--config", config_path)->required();
    cmd_tune->add_option("--out", out_path)->required();

    auto* cmd_eval = app.add_subcommand("eval", "evaluate on a dataset; prints metrics JSON");
    cmd_eval->add_option("--backbone", backbone_path)->required();
    cmd_eval->add_option("--coda", coda_path);
    cmd_eval->add_option("--dataset", dataset_path)->required();
    cmd_eval->add_option("--embeddings", embeddings_path);
    cmd_eval->add_option("--config", config_path);
    cmd_eval->add_option("--bank-dataset", bank_dataset,
                         "dataset supplying accepted solutions (defaults to --dataset)");

    auto* cmd_noise = app.add_subcommand("identify-noise", "emit per-step role annotations");
    cmd_noise->add_option("--dataset", dataset_path)->required();
    cmd_noise->add_option("--model", coda_path)->required();
    cmd_noise->add_option("--embeddings", embeddings_path);
    cmd_noise->add_option("--config", config_path);
    cmd_noise->add_option("--dump-graphs", dump_dir);

    auto* cmd_sweep = app.add_subcommand("sweep", "sparsity sweep over the edge budget");
    cmd_sweep->add_option("--config", config_path)->required();
    cmd_sweep->add_option("--out", out_path)->required();

    auto* cmd_trace = app.add_subcommand("trace", "export a proficiency trace");
    cmd_trace->add_option("--backbone", backbone_path)->required();
    cmd_trace->add_option("--coda", coda_path)->required();
    cmd_trace->add_option("--dataset", dataset_path)->required();
    cmd_trace->add_option("--embeddings", embeddings_path);
    cmd_trace->add_option("--config", config_path);
    cmd_trace->add_option("--learner", learner_id)->required();
    cmd_trace->add_option("--concept", concept_idx)->required();
    cmd_trace->add_option("--out", out_path)->required();

    auto* cmd_run = app.add_subcommand("run", "full experiment; writes a JSON report");
    cmd_run->add_option("--config", config_path)->required();
    cmd_run->add_option("--out", out_path);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_synth->parsed()) {
            ExperimentConfig cfg =
                config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
            SynthConfig sc = cfg.synth.value_or(SynthConfig{});
            if (!cfg.seeds.empty()) sc.seed = cfg.seeds[0];
            SynthResult gen = generate(sc);
            fs::create_directories(out_path);
            save_dataset(gen.dataset, out_path + "/dataset.jsonl");
            save_truth(gen.truth, gen.dataset, out_path + "/truth.jsonl");
            save_embeddings(out_path + "/embeddings.bin", gen.keys, gen.rows);
            std::cout << "wrote " << out_path << "/dataset.jsonl (" << gen.dataset.sequences.size()
                      << " learners)\n";
        } else if (cmd_train->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path);
            if (!dataset_path.empty()) cfg.dataset_path = dataset_path;
            if (!embeddings_path.empty()) cfg.embeddings_path = embeddings_path;
            require(!cfg.dataset_path.empty(), "train-backbone needs a dataset");
            Dataset ds = load_dataset(cfg.dataset_path);
            auto provider = make_provider(cfg.embeddings_path, cfg.encoder_dim);
            std::uint64_t seed = cfg.seeds.empty() ? 7 : cfg.seeds[0];
            Split split = split_dataset(ds, 0.7, 0.1, 0.2, seed);
            BackboneDims dims = cfg.backbone_dims;
            dims.d = cfg.encoder_dim;
            dims.questions = std::size_t(ds.question_count);
            dims.concepts = std::size_t(ds.concept_count);
            dims.d_h = std::max(dims.d_h, dims.concepts);
            TrainConfig tc = cfg.backbone_train;
            tc.seed = seed;
            ParamStore params = train_backbone(split.train, split.valid, *provider, dims, tc);
            save_checkpoint(params, out_path);
            Metrics m = evaluate(params, split.test, *provider);
            std::cout << nlohmann::ordered_json{{"auc", m.auc}, {"f1", m.f1}, {"rmse", m.rmse}}.dump()
                      << "\n";
        } else if (cmd_tune->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path);
            require(!cfg.dataset_path.empty() || cfg.synth.has_value(), "tune needs data");
            ParamStore backbone = load_checkpoint(backbone_path);
            std::uint64_t seed = cfg.seeds.empty() ? 7 : cfg.seeds[0];
            Dataset ds;
            std::shared_ptr<EmbeddingProvider> provider;
            if (cfg.synth.has_value()) {
                SynthConfig sc = *cfg.synth;
                sc.seed = seed;
                SynthResult gen = generate(sc);
                ds = std::move(gen.dataset);
                provider = gen.provider;
            } else {
                ds = load_dataset(cfg.dataset_path);
                provider = make_provider(cfg.embeddings_path, cfg.encoder_dim);
            }
            Split split = split_dataset(ds, 0.7, 0.1, 0.2, seed);
            TuneConfig tc = cfg.tune;
            tc.seed = seed;
            tc.denoise.seed = seed;
            ParamStore tuned = tune_coda(backbone, split.train, split.valid, *provider, tc);
            save_checkpoint(filter_slots(tuned, "coda."), out_path);
            SolutionBank bank = build_solution_bank(split.train, *provider);
            Metrics m = coda_evaluate(tuned, split.test, *provider, bank, tc.denoise);
            std::cout << nlohmann::ordered_json{{"auc", m.auc}, {"f1", m.f1}, {"rmse", m.rmse}}.dump()
                      << "\n";
        } else if (cmd_eval->parsed()) {
            ExperimentConfig cfg =
                config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
            if (!embeddings_path.empty()) cfg.embeddings_path = embeddings_path;
            Dataset ds = load_dataset(dataset_path);
            ParamStore backbone = load_checkpoint(backbone_path);
            BackboneDims dims = backbone_dims_from(backbone);
            auto provider = make_provider(cfg.embeddings_path, dims.d);
            Metrics m;
            if (coda_path.empty()) {
                m = evaluate(backbone, ds, *provider);
            } else {
                ParamStore full = load_model_pair(backbone_path, coda_path);
                Dataset bank_ds = bank_dataset.empty() ? ds : load_dataset(bank_dataset);
                SolutionBank bank = build_solution_bank(bank_ds, *provider);
                m = coda_evaluate(full, ds, *provider, bank, cfg.tune.denoise);
            }
            std::cout << nlohmann::ordered_json{{"auc", m.auc}, {"f1", m.f1}, {"rmse", m.rmse}}.dump()
                      << "\n";
        } else if (cmd_noise->parsed()) {
            ExperimentConfig cfg =
                config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
            if (!embeddings_path.empty()) cfg.embeddings_path = embeddings_path;
            Dataset ds = load_dataset(dataset_path);
            ParamStore model = load_checkpoint(coda_path);
            ParamStore coda_only = filter_slots(model, "coda.");
            require(coda_only.size() > 0, "model checkpoint has no coda slots");
            CodaDims cd = coda_dims_from(coda_only);
            auto provider = make_provider(cfg.embeddings_path, cd.d);
            SolutionBank bank = build_solution_bank(ds, *provider);
            auto anns = annotate_dataset(coda_only, ds, *provider, bank, cfg.tune.denoise);
            for (std::size_t u = 0; u < ds.sequences.size(); ++u) {
                for (std::size_t t = 0; t < anns[u].steps.size(); ++t) {
                    const auto& st = anns[u].steps[t];
                    nlohmann::ordered_json j;
                    j["learner"] = ds.sequences[u].learner_id;
                    j["step"] = int(t) + 1;
                    j["role"] = st.role == Role::Unwanted ? "unwanted"
                                                          : (st.role == Role::Weak ? "weak" : "core");
                    j["cluster"] = st.cluster;
                    j["core_step"] = st.core_step;
                    std::cout << j.dump() << "\n";
                }
            }
            if (!dump_dir.empty()) {
                fs::create_directories(dump_dir);
                CodaWeights<double> cw = coda_view(coda_only);
                Vec weight(cw.W.begin(), cw.W.end());
                for (std::size_t u = 0; u < ds.sequences.size(); ++u) {
                    const auto& seq = ds.sequences[u];
                    EncodedSeq codes;
                    for (const auto& rec : seq.records) codes.push_back(provider->encode(rec.code));
                    SymMatrix mm = metric_matrix(codes, weight);
                    CodeGraph g =
                        build_adjacency(mm, edge_budget(seq.records.size(), cfg.tune.denoise.p));
                    std::ofstream gf(dump_dir + "/" + seq.learner_id + ".edges");
                    for (std::size_t i = 0; i < g.n; ++i)
                        for (std::size_t j2 : g.neighbors[i])
                            if (j2 > i) gf << (i + 1) << " " << (j2 + 1) << "\n";
                }
            }
        } else if (cmd_sweep->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path);
            std::string csv = sparsity_sweep(cfg, {0.2, 0.4, 0.5, 0.6, 0.8});
            write_text(out_path, csv);
            std::cout << csv;
        } else if (cmd_trace->parsed()) {
            ExperimentConfig cfg =
                config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
            if (!embeddings_path.empty()) cfg.embeddings_path = embeddings_path;
            Dataset ds = load_dataset(dataset_path);
            ParamStore full = load_model_pair(backbone_path, coda_path);
            BackboneDims dims = backbone_dims_from(full);
            auto provider = make_provider(cfg.embeddings_path, dims.d);
            SolutionBank bank = build_solution_bank(ds, *provider);
            std::string csv =
                export_trace(full, ds, *provider, bank, cfg.tune.denoise, learner_id, concept_idx);
            write_text(out_path, csv);
        } else if (cmd_run->parsed()) {
            ExperimentConfig cfg = load_experiment_config(config_path);
            ExperimentReport rep = run_experiment(cfg);
            std::string text = rep.json.dump(2) + "\n";
            if (!out_path.empty()) {
                fs::create_directories(fs::path(out_path).parent_path().empty()
                                           ? fs::path(".")
                                           : fs::path(out_path).parent_path());
                write_text(out_path, text);
            }
            std::cout << text;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
