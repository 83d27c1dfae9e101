#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

#include "CLI11.hpp"

#include "bbcu/bench.hpp"
#include "bbcu/checksum.hpp"
#include "bbcu/config.hpp"
#include "bbcu/metrics.hpp"
#include "bbcu/model_io.hpp"
#include "bbcu/png_io.hpp"
#include "bbcu/synth.hpp"
#include "bbcu/train.hpp"

namespace fs = std::filesystem;
using namespace bbcu;

namespace {

std::vector<fs::path> list_pngs(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

Dataset load_dataset(const RunConfig::DataConfig& dc, int patch) {
    Dataset data;
    if (dc.train_dir.empty()) {
        const int size = std::max(dc.synthetic_size, patch);
        data.hq = synthetic_dataset(99, dc.synthetic_count, size, size);
        return data;
    }
    for (const auto& p : list_pngs(dc.train_dir)) {
        Tensor img = read_png(p.string());
        if (img.shape.c == 1) img = repeat_channels(img, 3);
        data.hq.push_back(std::move(img));
    }
    if (data.hq.empty()) throw IoError("no .png files in " + dc.train_dir);
    if (dc.degradation.kind == DegradationSpec::Kind::PairedFiles) {
        if (dc.lq_dir.empty()) throw IoError("paired degradation needs data.lq_dir");
        for (const auto& p : list_pngs(dc.lq_dir)) {
            Tensor img = read_png(p.string());
            if (img.shape.c == 1) img = repeat_channels(img, 3);
            data.lq.push_back(std::move(img));
        }
        if (data.lq.size() != data.hq.size())
            throw IoError("lq/hq directories hold different file counts");
        data.paired = true;
    }
    return data;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
}

std::string spec_summary(const NetworkSpec& s) {
    std::ostringstream os;
    os << "task=" << task_name(s.task) << " scale=" << s.scale << " channels=" << s.channels
       << " body_blocks=" << s.body_blocks << " variant=" << variant_name(s.variant)
       << " k=" << s.k << " binarized(h/b/u/t)=" << s.binarized.head << s.binarized.body
       << s.binarized.upsampling << s.binarized.tail;
    return os.str();
}

int cmd_train(const std::string& config_path, const std::string& out_override) {
    RunConfig cfg = parse_config_file(config_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    fs::create_directories(cfg.out_dir);

    Dataset data = load_dataset(cfg.data, cfg.train.patch);
    RestorationNet net = build(cfg.net, cfg.train.seed);

    std::ofstream trace(fs::path(cfg.out_dir) / "trace.csv");
    if (!trace) throw IoError("cannot write trace.csv in " + cfg.out_dir);
    trace << std::setprecision(17);
    TrainResult res = train_loop(net, data, cfg.train, cfg.data.degradation, &trace);
    trace.close();

    save_model((fs::path(cfg.out_dir) / "model.bbcu").string(), net);

    std::ifstream cf(config_path, std::ios::binary);
    std::stringstream cs;
    cs << cf.rdbuf();
    const std::string ctext = cs.str();
    std::ostringstream manifest;
    manifest << "config=" << config_path << "\n";
    manifest << "config_crc32=" << crc32(reinterpret_cast<const uint8_t*>(ctext.data()),
                                         ctext.size())
             << "\n";
    manifest << "seed=" << cfg.train.seed << "\n";
    manifest << "spec: " << spec_summary(cfg.net) << "\n";
    manifest << std::setprecision(17);
    manifest << "input_val_psnr=" << res.input_val_psnr << "\n";
    manifest << "final_val_psnr=" << res.final_val_psnr << "\n";
    write_text(fs::path(cfg.out_dir) / "manifest.txt", manifest.str());

    std::cout << "trained " << cfg.train.steps << " steps; input PSNR " << std::fixed
              << std::setprecision(2) << res.input_val_psnr << " dB -> val PSNR "
              << res.final_val_psnr << " dB\n";
    std::cout << "wrote " << cfg.out_dir << "/model.bbcu, trace.csv, manifest.txt\n";
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& lq_dir, const std::string& hq_dir,
             bool luma, bool with_ssim) {
    RestorationNet net = load_model(model_path);
    const auto lqs = list_pngs(lq_dir);
    const auto hqs = list_pngs(hq_dir);
    if (lqs.empty()) throw IoError("no .png files in " + lq_dir);
    if (lqs.size() != hqs.size()) throw IoError("lq/hq directories hold different file counts");

    std::cout << std::left << std::setw(28) << "file" << std::right << std::setw(10) << "psnr";
    if (with_ssim) std::cout << std::setw(10) << "ssim";
    std::cout << "\n" << std::fixed << std::setprecision(4);
    double psum = 0.0, ssum = 0.0;
    for (size_t i = 0; i < lqs.size(); ++i) {
        Tensor lq = read_png(lqs[i].string());
        Tensor hq = read_png(hqs[i].string());
        if (lq.shape.c == 1) lq = repeat_channels(lq, 3);
        if (hq.shape.c == 1) hq = repeat_channels(hq, 3);
        Tensor pred = net_forward(net, lq, RunMode::Infer);
        if (!(pred.shape == hq.shape))
            throw IoError("prediction/HQ shape mismatch for " + lqs[i].filename().string());
        const Tensor& pa = luma ? rgb_to_luma(pred) : pred;
        const Tensor& pb = luma ? rgb_to_luma(hq) : hq;
        const double p = psnr(pa, pb);
        psum += p;
        std::cout << std::left << std::setw(28) << lqs[i].filename().string() << std::right
                  << std::setw(10) << p;
        if (with_ssim) {
            const double s = ssim(pa, pb);
            ssum += s;
            std::cout << std::setw(10) << s;
        }
        std::cout << "\n";
    }
    std::cout << std::left << std::setw(28) << "mean" << std::right << std::setw(10)
              << psum / double(lqs.size());
    if (with_ssim) std::cout << std::setw(10) << ssum / double(lqs.size());
    std::cout << "\n";
    return 0;
}

int cmd_bench(int cin, int cout_, int height, int width, int kernel, const std::string& impl,
              const std::string& json_out) {
    BenchConfig cfg;
    cfg.in_channels = cin;
    cfg.out_channels = cout_;
    cfg.height = height;
    cfg.width = width;
    cfg.kernel = kernel;
    cfg.padding = (kernel - 1) / 2;
    if (impl == "auto") cfg.impl = BinConvImpl::Auto;
    else if (impl == "reference") cfg.impl = BinConvImpl::Reference;
    else if (impl == "scalar") cfg.impl = BinConvImpl::Scalar;
    else if (impl == "avx2") cfg.impl = BinConvImpl::Avx2;
    else throw ValueError("impl must be auto|reference|scalar|avx2");
    if (!binconv_impl_available(cfg.impl))
        throw ValueError("requested implementation is not available on this CPU");

    const ThroughputReport rep = bench_kernel(cfg);
    std::cout << rep.to_kv_text();
    if (!json_out.empty()) {
        write_text(json_out, rep.to_json() + "\n");
        std::cout << "report=" << json_out << "\n";
    }
    return 0;
}

NetworkSpec srresnet_x4_spec() {
    NetworkSpec s;
    s.task = Task::SR;
    s.scale = 4;
    s.channels = 64;
    s.body_blocks = 32;
    s.binarized.body = true;
    s.variant = Variant::V4;
    s.k = 130.0;
    return s;
}

int cmd_account(const std::string& config_path, const std::string& preset,
                const std::string& out_dir) {
    NetworkSpec spec;
    if (!config_path.empty()) {
        spec = parse_config_file(config_path).net;
    } else if (preset == "srresnet-x4") {
        spec = srresnet_x4_spec();
    } else {
        throw ValueError("account needs --config or --preset srresnet-x4");
    }

    CostReport rep = count_costs(spec);
    std::cout << rep.to_table();

    if (const CostRow* up = rep.row("upsampling")) {
        const double ours_m = up->ops_f_m();
        const double our_share = 100.0 * double(up->ops_f) / double(rep.total_ops_f());
        std::cout << "\nupsampling share of total OPs: " << std::fixed << std::setprecision(1)
                  << our_share << "% under this counting rule (" << std::setprecision(2)
                  << ours_m << " M); the reference accounting lists 76441.19 M (52.3%), a "
                  << "convention this rule does not reproduce\n";
    }

    if (preset == "srresnet-x4") {
        // reference measured PSNRs for SRResNet x4 on Set14 (inputs, not ours):
        // full-precision 28.60 dB; per-part binarized 28.58/28.38/28.59/27.76
        const std::map<std::string, double> psnr_b{
            {"head", 28.58}, {"body", 28.38}, {"upsampling", 28.59}, {"tail", 27.76}};
        const double psnr_f = 28.60;
        std::cout << "\nbinarization benefit (reference PSNR inputs, psnr_f=28.60):\n"
                  << std::left << std::setw(12) << "part" << std::right << std::setw(14)
                  << "V_C(x1e-6)" << std::setw(14) << "V_P(x1e-3)" << "\n";
        for (const auto& r : rep.rows) {
            auto it = psnr_b.find(r.part);
            if (it == psnr_b.end()) continue;
            const Benefit b = benefit(psnr_f, it->second, r.ops_f_m(), r.ops_b_m(),
                                      r.params_f_k(), r.params_b_k());
            std::cout << std::left << std::setw(12) << r.part << std::right << std::fixed
                      << std::setprecision(2) << std::setw(14) << b.v_c * 1e6 << std::setw(14)
                      << b.v_p * 1e3 << "\n";
        }
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text(fs::path(out_dir) / "costs.csv", rep.to_csv());
        std::cout << "wrote " << out_dir << "/costs.csv\n";
    }
    return 0;
}

int cmd_diagnose(const std::string& config_path, uint64_t seed) {
    NetworkSpec spec = config_path.empty() ? NetworkSpec{} : parse_config_file(config_path).net;
    if (config_path.empty()) {
        spec.task = Task::Denoise;
        spec.channels = 64;
        spec.body_blocks = 1;
        spec.binarized.body = true;
        spec.variant = Variant::V3;
        spec.k = 130.0;
    }
    RestorationNet net = build(spec, seed);
    if (net.body.empty() || !net.body[0].binarized)
        throw ValueError("diagnose needs a binarized body");
    BbcuBlock& blk = net.body[0].bin[0];

    Rng rng(seed + 1);
    Tensor feat({1, spec.channels, 24, 24});
    for (double& v : feat.data) v = rng.uniform(-0.5, 0.5);

    std::cout << "value ranges of the first body conv (channel-aggregated mean|.|)\n";
    for (double k : {1.0, spec.k}) {
        BranchStats st = branch_value_ranges(blk, scale(feat, k));
        std::cout << "input x" << std::fixed << std::setprecision(0) << k << ": conv branch "
                  << std::setprecision(3) << st.conv_total << ", residual branch "
                  << st.residual_total << "\n";
    }
    BranchStats st = branch_value_ranges(blk, scale(feat, spec.k));
    std::cout << std::left << std::setw(9) << "channel" << std::right << std::setw(12) << "conv"
              << std::setw(12) << "residual" << "\n"
              << std::fixed << std::setprecision(3);
    for (size_t c = 0; c < st.conv_mean_abs.size(); ++c)
        std::cout << std::left << std::setw(9) << c << std::right << std::setw(12)
                  << st.conv_mean_abs[c] << std::setw(12) << st.residual_mean_abs[c] << "\n";
    return 0;
}

int cmd_toyset(const std::string& out_dir, int count, int size, uint64_t seed, double sigma) {
    fs::create_directories(out_dir);
    Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        Tensor img = synthetic_image(rng, size, size);
        std::ostringstream name;
        name << "img" << std::setw(2) << std::setfill('0') << i << ".png";
        write_png((fs::path(out_dir) / name.str()).string(), img);
        if (sigma > 0.0) {
            DegradationSpec d;
            d.kind = DegradationSpec::Kind::Awgn;
            d.sigma = sigma / 255.0;
            Tensor noisy = degrade(img, d, rng);
            fs::create_directories(fs::path(out_dir) / "noisy");
            write_png((fs::path(out_dir) / "noisy" / name.str()).string(), noisy);
        }
    }
    std::cout << "wrote " << count << " images to " << out_dir
              << (sigma > 0 ? " (plus noisy/ pairs)" : "") << "\n";
    return 0;
}

// ---- ablation suites ----

struct AblateRow {
    std::string label;
    std::vector<double> psnrs;

    double median() const {
        std::vector<double> v = psnrs;
        std::sort(v.begin(), v.end());
        const size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    }
    double spread() const {
        auto [lo, hi] = std::minmax_element(psnrs.begin(), psnrs.end());
        return 0.5 * (*hi - *lo);
    }
};

NetworkSpec toy_denoise(Variant v, int channels) {
    NetworkSpec s;
    s.task = Task::Denoise;
    s.scale = 1;
    s.channels = channels;
    s.body_blocks = 6;
    s.binarized.body = true;
    s.variant = v;
    s.k = (v == Variant::V3 || v == Variant::V4) ? std::round(130.0 * channels / 64.0) : 1.0;
    return s;
}

double ablate_run(const NetworkSpec& spec, const Dataset& data, int steps, uint64_t seed,
                  double lr) {
    RestorationNet net = build(spec, seed);
    TrainConfig cfg;
    cfg.lr = lr;
    cfg.batch = 4;
    cfg.patch = 32;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.val_interval = steps;
    cfg.val_patches = 4;
    DegradationSpec degr;
    degr.kind = DegradationSpec::Kind::Awgn;
    degr.sigma = 25.0 / 255.0;
    return train_loop(net, data, cfg, degr).final_val_psnr;
}

void print_ablate_table(const std::string& title, const std::vector<AblateRow>& rows,
                        const std::string& out_dir, const std::string& csv_name) {
    std::cout << title << "\n"
              << std::left << std::setw(22) << "config" << std::right << std::setw(12)
              << "median" << std::setw(12) << "spread" << "  per-seed\n"
              << std::fixed << std::setprecision(3);
    std::ostringstream csv;
    csv << "config,median,spread,psnrs\n" << std::fixed << std::setprecision(5);
    for (const auto& r : rows) {
        std::cout << std::left << std::setw(22) << r.label << std::right << std::setw(12)
                  << r.median() << std::setw(12) << r.spread() << "  ";
        csv << r.label << "," << r.median() << "," << r.spread() << ",";
        for (size_t i = 0; i < r.psnrs.size(); ++i) {
            std::cout << (i ? " " : "") << r.psnrs[i];
            csv << (i ? ";" : "") << r.psnrs[i];
        }
        std::cout << "\n";
        csv << "\n";
    }
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text(fs::path(out_dir) / csv_name, csv.str());
        std::cout << "wrote " << out_dir << "/" << csv_name << "\n";
    }
}

int cmd_ablate(const std::string& suite, int seeds, int steps, double lr,
               std::vector<int> channels, std::vector<int> ks, const std::string& out_dir) {
    Dataset data;
    data.hq = synthetic_dataset(424242, 8, 96, 96);
    std::vector<AblateRow> rows;

    auto seeds_of = [&](const NetworkSpec& spec, const std::string& label) {
        AblateRow row{label, {}};
        for (int s = 1; s <= seeds; ++s) {
            row.psnrs.push_back(ablate_run(spec, data, steps, uint64_t(s), lr));
            std::cout << "." << std::flush;
        }
        std::cout << " " << label << " done\n";
        return row;
    };

    if (suite == "variants") {
        for (Variant v : {Variant::V1, Variant::V2, Variant::V3, Variant::V4})
            rows.push_back(seeds_of(toy_denoise(v, 12), variant_name(v)));
        print_ablate_table("variant sweep (toy denoiser, sigma=25)", rows, out_dir,
                           "variants.csv");
    } else if (suite == "residual-count") {
        for (int m : {1, 2, 3, 6}) {
            NetworkSpec bin = toy_denoise(Variant::V4, 12);
            bin.body_unit_convs = m;
            rows.push_back(seeds_of(bin, "bin convs/unit=" + std::to_string(m)));
        }
        for (int m : {1, 2, 3, 6}) {
            NetworkSpec fp = toy_denoise(Variant::V4, 12);
            fp.binarized.body = false;
            fp.body_unit_convs = m;
            rows.push_back(seeds_of(fp, "fp convs/unit=" + std::to_string(m)));
        }
        print_ablate_table("residual-connection count sweep (6 body convs)", rows, out_dir,
                           "residual_count.csv");
    } else if (suite == "breakpoint") {
        NetworkSpec base = toy_denoise(Variant::V4, 12);
        rows.push_back(seeds_of(base, "none"));
        for (int pos = 1; pos <= base.body_blocks; ++pos) {
            NetworkSpec s = base;
            s.no_residual_at = pos;
            rows.push_back(seeds_of(s, "breakpoint=" + std::to_string(pos)));
        }
        print_ablate_table("residual breakpoint sweep", rows, out_dir, "breakpoint.csv");
    } else if (suite == "k-sweep") {
        if (channels.empty()) channels = {16, 32, 64};
        if (ks.empty()) ks = {1, 32, 65, 130, 260};
        for (int c : channels)
            for (int k : ks) {
                NetworkSpec s = toy_denoise(Variant::V4, c);
                s.k = double(k);
                rows.push_back(seeds_of(s, "C=" + std::to_string(c) + ",k=" + std::to_string(k)));
            }
        print_ablate_table("amplification factor sweep", rows, out_dir, "k_sweep.csv");
    } else {
        throw ValueError("unknown suite '" + suite +
                         "' (variants|residual-count|breakpoint|k-sweep)");
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"binarized image-restoration toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir, model_path, lq_dir, hq_dir, preset, impl = "auto";
    std::string json_out, suite;
    bool luma = false, with_ssim = false;
    int cin = 64, cout_ = 64, height = 180, width = 320, kernel = 3;
    int count = 8, size = 96, seeds = 3, steps = 600;
    double lr = 1e-3, sigma = 0.0;
    uint64_t seed = 1;
    std::vector<int> channels, ks;

    auto* train = app.add_subcommand("train", "train a model from a config file");
    train->add_option("config", config_path, "config file")->required();
    train->add_option("--out", out_dir, "override [output] dir");

    auto* eval = app.add_subcommand("eval", "evaluate a model on LQ/HQ image pairs");
    eval->add_option("--model", model_path)->required();
    eval->add_option("--lq", lq_dir)->required();
    eval->add_option("--hq", hq_dir)->required();
    eval->add_flag("--y", luma, "PSNR on the luma channel");
    eval->add_flag("--ssim", with_ssim, "also report SSIM");

    auto* bench = app.add_subcommand("bench", "benchmark the packed kernel vs the naive loop");
    bench->add_option("--cin", cin);
    bench->add_option("--cout", cout_);
    bench->add_option("--height", height);
    bench->add_option("--width", width);
    bench->add_option("--kernel", kernel);
    bench->add_option("--impl", impl, "auto|reference|scalar|avx2");
    bench->add_option("--json", json_out, "write the machine-readable report here");

    auto* account = app.add_subcommand("account", "OPs/params accounting report");
    account->add_option("--config", config_path);
    account->add_option("--preset", preset, "srresnet-x4");
    account->add_option("--out", out_dir, "also write costs.csv here");

    auto* ablate = app.add_subcommand("ablate", "desk-scale ablation sweeps");
    ablate->add_option("--suite", suite, "variants|residual-count|breakpoint|k-sweep")
        ->required();
    ablate->add_option("--seeds", seeds);
    ablate->add_option("--steps", steps);
    ablate->add_option("--lr", lr);
    ablate->add_option("--channels", channels, "k-sweep channel grid");
    ablate->add_option("--ks", ks, "k-sweep k grid");
    ablate->add_option("--out", out_dir, "write csv tables here");

    auto* toyset = app.add_subcommand("toyset", "write a synthetic PNG training set");
    toyset->add_option("--out", out_dir)->required();
    toyset->add_option("--count", count);
    toyset->add_option("--size", size);
    toyset->add_option("--seed", seed);
    toyset->add_option("--sigma", sigma, "also write noisy/ pairs at this 8-bit sigma");

    auto* diagnose = app.add_subcommand("diagnose", "value-range table: conv vs residual branch");
    diagnose->add_option("--config", config_path);
    diagnose->add_option("--seed", seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, out_dir);
        if (eval->parsed()) return cmd_eval(model_path, lq_dir, hq_dir, luma, with_ssim);
        if (bench->parsed()) return cmd_bench(cin, cout_, height, width, kernel, impl, json_out);
        if (account->parsed()) return cmd_account(config_path, preset, out_dir);
        if (ablate->parsed()) return cmd_ablate(suite, seeds, steps, lr, channels, ks, out_dir);
        if (toyset->parsed()) return cmd_toyset(out_dir, count, size, seed, sigma);
        if (diagnose->parsed()) return cmd_diagnose(config_path, seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const IoError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
