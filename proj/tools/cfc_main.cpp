// cfc — cross-spectral face completion toolbox.
// Subcommands: gen-data, train, synth, eval, report.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfc/config.hpp"
#include "cfc/hfreval.hpp"
#include "cfc/image_io.hpp"
#include "cfc/synthgen.hpp"
#include "cfc/trainer.hpp"

namespace fs = std::filesystem;
using namespace cfc;

namespace {

int max_threads() {
    // CFC_THREADS caps internal parallelism. All current kernels are
    // single-threaded, so the effective value is min(CFC_THREADS, 1).
    if (const char* env = std::getenv("CFC_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return std::min(n, 1);
    }
    return 1;
}

RunConfig load_config(const std::string& path, uint64_t* seed_override) {
    RunConfig cfg = path.empty() ? RunConfig{} : RunConfig::from_file(path);
    if (seed_override) cfg.seed = *seed_override;
    cfg.validate();
    return cfg;
}

void write_provenance(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream c(fs::path(out_dir) / "config.resolved.txt");
    c << cfg.to_text();
    c << "# content_hash = " << cfg.content_hash() << "\n";
    std::ofstream s(fs::path(out_dir) / "seed.txt");
    s << cfg.seed << "\n";
}

int cmd_gen_data(const RunConfig& cfg, const std::string& out_dir) {
    synthgen::DatasetSplit split = synthgen::make_dataset(cfg.gen_config(), cfg.seed);
    synthgen::write_dataset(split, out_dir);
    write_provenance(cfg, out_dir);
    std::cout << "wrote dataset (" << split.train.size() << " train, "
              << split.test_gallery.size() << " gallery, " << split.test_probe.size()
              << " probe) to " << out_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir,
              bool resume) {
    synthgen::DatasetSplit data = synthgen::load_dataset(data_dir);
    write_provenance(cfg, out_dir);
    std::string ckpt = out_dir + "/checkpoint.ckpt";
    trainer::TrainState state = resume && fs::exists(ckpt)
                                    ? trainer::load_state(ckpt, data)
                                    : trainer::make_state(cfg, data);
    trainer::train(state, out_dir);
    std::cout << "trained to step " << state.step << "; checkpoint at " << ckpt << "\n";
    return 0;
}

int cmd_synth(const std::string& ckpt, const std::string& input, const std::string& out_dir) {
    auto model = trainer::load_model(ckpt);
    fs::create_directories(out_dir);
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::recursive_directory_iterator(input))
            if (e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(input);
    }
    if (files.empty()) throw std::runtime_error("no PNG inputs under " + input);
    for (const auto& f : files) {
        Tensor out = trainer::synthesize(*model, imageio::load_png(f.string()));
        imageio::save_png(out, (fs::path(out_dir) / f.filename()).string());
    }
    std::cout << "synthesized " << files.size() << " image(s) to " << out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& protocol_dir, const std::string& mode_str,
             const std::string& out_dir) {
    auto model = trainer::load_model(ckpt);
    hfreval::Mode mode = hfreval::mode_from_string(mode_str);
    hfreval::MetricsReport rep = hfreval::run_protocol(*model, data_dir, protocol_dir, mode);
    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "report.csv");
        out << rep.to_csv();
    }
    {
        std::ofstream out(fs::path(out_dir) / "roc.csv");
        out.precision(17);
        out << "far,vr\n";
        for (auto [far, vr] : rep.roc) out << far << "," << vr << "\n";
    }
    // provenance: seed and resolved config travel with the checkpoint
    nets::Checkpoint ck = nets::Checkpoint::load(ckpt);
    if (const std::string* cfg_text = ck.str("config")) {
        RunConfig cfg = RunConfig::from_text(*cfg_text);
        write_provenance(cfg, out_dir);
    }
    std::cout << "mode " << mode_str << ": rank1 = " << rep.rank1 << ", report at " << out_dir
              << "/report.csv\n";
    return 0;
}

int cmd_report(const std::string& ckpt, const std::string& data_dir, const std::string& out_dir,
               int max_rows) {
    auto model = trainer::load_model(ckpt);
    synthgen::DatasetSplit data = synthgen::load_dataset(data_dir);
    fs::create_directories(out_dir);
    std::vector<Tensor> cells;
    int rows = 0;
    for (const auto& probe : data.test_probe) {
        if (rows >= max_rows) break;
        const synthgen::FaceSample* gt = nullptr;
        for (const auto& g : data.test_gallery)
            if (g.identity == probe.identity) gt = &g;
        if (!gt) continue;
        cells.push_back(probe.image);                       // input NIR
        cells.push_back(trainer::synthesize(*model, probe.image)); // synthesized
        cells.push_back(gt->image);                         // ground-truth VIS
        ++rows;
    }
    if (cells.empty()) throw std::runtime_error("no probe/gallery pairs in " + data_dir);
    imageio::save_png(imageio::make_mosaic(cells, 3),
                       (fs::path(out_dir) / "grid.png").string());
    std::cout << "wrote " << rows << "-row comparison grid to " << out_dir << "/grid.png\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    (void)max_threads();
    CLI::App app{"cfc: NIR-to-VIS face completion toolbox"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_dir, ckpt_path, input_path, protocol_dir;
    std::string mode_str = "cfc";
    uint64_t seed = 0;
    bool have_seed = false, resume = false;
    int report_rows = 8;

    auto* gen = app.add_subcommand("gen-data", "generate the synthetic NIR/VIS dataset");
    gen->add_option("--config", config_path, "key = value config file");
    gen->add_option("--out", out_dir, "output dataset directory")->required();
    gen->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
        have_seed = true;
    });

    auto* train = app.add_subcommand("train", "train the completion model");
    train->add_option("--config", config_path, "key = value config file");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", out_dir, "run output directory")->required();
    train->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
        have_seed = true;
    });
    train->add_flag("--resume", resume, "resume from an existing checkpoint in --out");

    auto* synth = app.add_subcommand("synth", "synthesize VIS images from NIR inputs");
    synth->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    synth->add_option("--in", input_path, "input PNG or directory")->required();
    synth->add_option("--out", out_dir, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "recognition-via-generation evaluation");
    eval->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--protocol", protocol_dir,
                     "protocol directory (fold_* subdirs); default <data>/protocol");
    eval->add_option("--mode", mode_str, "raw | cfc | cfc_fuse");
    eval->add_option("--out", out_dir, "output directory for report.csv / roc.csv")->required();

    auto* report = app.add_subcommand("report", "emit input/synthesized/ground-truth PNG grid");
    report->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
    report->add_option("--data", data_dir, "dataset directory")->required();
    report->add_option("--out", out_dir, "output directory")->required();
    report->add_option("--rows", report_rows, "number of probe rows in the grid");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        uint64_t* seed_ptr = have_seed ? &seed : nullptr;
        if (gen->parsed()) return cmd_gen_data(load_config(config_path, seed_ptr), out_dir);
        if (train->parsed())
            return cmd_train(load_config(config_path, seed_ptr), data_dir, out_dir, resume);
        if (synth->parsed()) return cmd_synth(ckpt_path, input_path, out_dir);
        if (eval->parsed()) {
            if (protocol_dir.empty()) protocol_dir = data_dir + "/protocol";
            return cmd_eval(ckpt_path, data_dir, protocol_dir, mode_str, out_dir);
        }
        if (report->parsed()) return cmd_report(ckpt_path, data_dir, out_dir, report_rows);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: invalid config: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
