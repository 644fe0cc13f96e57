// Command-line front end for the dehazing toolkit: haze synthesis,
// classical and learned dehazing, training, quality and detection
// evaluation, and the domain-adaptation demo.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dehaze/aodnet.hpp"
#include "dehaze/classical.hpp"
#include "dehaze/detect_eval.hpp"
#include "dehaze/domain_adapt.hpp"
#include "dehaze/haze_model.hpp"
#include "dehaze/image.hpp"
#include "dehaze/losses.hpp"
#include "dehaze/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

std::vector<fs::path> list_images(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw std::runtime_error("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

// temp + rename so partially written outputs never appear under the name
void atomic_write_text(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write: " + tmp);
        f << content;
    }
    fs::rename(tmp, path);
}

void atomic_save_image(const dehaze::Image& img, const std::string& path) {
    std::string tmp = path + ".tmp" + fs::path(path).extension().string();
    dehaze::save_image(img, tmp);
    fs::rename(tmp, path);
}

void echo_config(const json& cfg) { std::cerr << "config: " << cfg.dump() << "\n"; }

dehaze::Interval parse_interval(const std::string& s, const char* what) {
    auto comma = s.find(',');
    if (comma == std::string::npos)
        throw CLI::ValidationError(std::string(what) + " must be 'lo,hi'");
    try {
        return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
    } catch (const std::logic_error&) {
        throw CLI::ValidationError(std::string(what) + " must be 'lo,hi'");
    }
}

std::string format4(double v) {
    if (std::isinf(v)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

int run_synth(const std::string& in_dir, const std::string& out_dir, uint64_t seed,
              const std::string& beta_range, const std::string& a_range,
              const std::string& depth_kind) {
    dehaze::Interval beta = parse_interval(beta_range, "--beta-range");
    dehaze::Interval a = parse_interval(a_range, "--a-range");
    dehaze::DepthKind kind = dehaze::depth_kind_from_string(depth_kind);
    echo_config({{"cmd", "synth"}, {"in", in_dir}, {"out", out_dir}, {"seed", seed},
                 {"beta_range", {beta.lo, beta.hi}}, {"a_range", {a.lo, a.hi}},
                 {"depth", depth_kind}});

    fs::create_directories(out_dir);
    auto files = list_images(in_dir);
    if (files.empty()) throw std::runtime_error("no images in " + in_dir);

    uint64_t idx = 0;
    for (const auto& path : files) {
        dehaze::Image clean = dehaze::load_image(path.string());
        uint64_t img_seed = seed * 1000003ull + idx;
        dehaze::HazeParams hp = dehaze::random_haze_params(img_seed, a, beta);
        dehaze::DepthMap depth =
            dehaze::gen_depth(kind, clean.width, clean.height, img_seed);
        dehaze::TransmissionMap t = dehaze::transmission_from_depth(depth, hp.beta);
        dehaze::Image hazy = dehaze::synthesize_haze(clean, t, hp.A);

        fs::path out_path = fs::path(out_dir) / path.filename();
        atomic_save_image(hazy, out_path.string());

        double t_min_v = 1.0, t_max_v = 0.0, t_mean = 0.0;
        for (double v : t.t) {
            t_min_v = std::min(t_min_v, v);
            t_max_v = std::max(t_max_v, v);
            t_mean += v / t.t.size();
        }
        json sidecar{{"A", {hp.A[0], hp.A[1], hp.A[2]}},
                     {"beta", hp.beta},
                     {"t_min_floor", hp.t_min},
                     {"t_stats", {{"min", t_min_v}, {"max", t_max_v}, {"mean", t_mean}}},
                     {"depth", depth_kind},
                     {"seed", img_seed}};
        atomic_write_text((out_path.string() + ".json"), sidecar.dump(2) + "\n");
        ++idx;
    }
    std::cout << "synthesized " << files.size() << " images\n";
    return 0;
}

std::vector<dehaze::DehazeStage> parse_methods(const std::string& spec) {
    std::vector<dehaze::DehazeStage> stages;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item == "dcp") {
            stages.push_back([](const dehaze::Image& im) { return dehaze::dcp_dehaze(im); });
        } else if (item == "clahe") {
            stages.push_back([](const dehaze::Image& im) { return dehaze::clahe(im); });
        } else if (item.rfind("aodnet:", 0) == 0) {
            auto net = std::make_shared<dehaze::AodNet>(
                dehaze::aodnet_load(item.substr(7)));
            stages.push_back([net](const dehaze::Image& im) {
                return dehaze::aodnet_dehaze(*net, im);
            });
        } else {
            throw CLI::ValidationError("unknown method: " + item);
        }
    }
    if (stages.empty()) throw CLI::ValidationError("--method is empty");
    return stages;
}

int run_dehaze(const std::string& in_dir, const std::string& out_dir,
               const std::string& method) {
    echo_config({{"cmd", "dehaze"}, {"in", in_dir}, {"out", out_dir}, {"method", method}});
    auto stages = parse_methods(method);
    fs::create_directories(out_dir);
    auto files = list_images(in_dir);
    if (files.empty()) throw std::runtime_error("no images in " + in_dir);
    for (const auto& path : files) {
        dehaze::Image img = dehaze::load_image(path.string());
        dehaze::Image out = dehaze::cascade(img, stages);
        atomic_save_image(out, (fs::path(out_dir) / path.filename()).string());
    }
    std::cout << "dehazed " << files.size() << " images\n";
    return 0;
}

std::vector<dehaze::TrainPair> load_pairs(const std::string& data_dir) {
    fs::path hazy_dir = fs::path(data_dir) / "hazy";
    fs::path clean_dir = fs::path(data_dir) / "clean";
    if (!fs::is_directory(hazy_dir) || !fs::is_directory(clean_dir))
        throw std::runtime_error("--data must contain hazy/ and clean/ subdirectories");
    std::vector<dehaze::TrainPair> pairs;
    for (const auto& path : list_images(hazy_dir.string())) {
        fs::path ref = clean_dir / path.filename();
        if (!fs::exists(ref))
            throw std::runtime_error("no clean counterpart for " + path.string());
        dehaze::TrainPair p;
        p.hazy = dehaze::load_image(path.string());
        p.clean = dehaze::load_image(ref.string());
        p.id = path.filename().string();
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw std::runtime_error("no training pairs found");
    return pairs;
}

dehaze::TrainConfig config_from_json(const json& j, dehaze::TrainConfig base) {
    if (j.contains("learning_rate")) base.learning_rate = j["learning_rate"];
    if (j.contains("momentum")) base.momentum = j["momentum"];
    if (j.contains("weight_decay")) base.weight_decay = j["weight_decay"];
    if (j.contains("grad_clip_norm")) base.grad_clip_norm = j["grad_clip_norm"];
    if (j.contains("batch_size")) base.batch_size = j["batch_size"];
    if (j.contains("epochs")) base.epochs = j["epochs"];
    if (j.contains("seed")) base.seed = j["seed"];
    if (j.contains("crop_size")) base.crop_size = j["crop_size"];
    if (j.contains("loss")) base.loss = dehaze::loss_kind_from_string(j["loss"]);
    return base;
}

int run_train(const std::string& data_dir, const std::string& loss,
              const std::string& out_ckpt, const std::string& config_path,
              const std::string& finetune_ckpt, uint64_t seed, int epochs) {
    dehaze::TrainConfig cfg;
    cfg.epochs = epochs;
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw std::runtime_error("cannot open config: " + config_path);
        cfg = config_from_json(json::parse(f), cfg);
    }
    // explicit flags win over the config file
    cfg.loss = dehaze::loss_kind_from_string(loss);
    cfg.seed = seed;

    dehaze::AodNet net;
    if (!finetune_ckpt.empty()) {
        net = dehaze::aodnet_load(finetune_ckpt);
        cfg.apply_finetune_preset();
    } else {
        net = dehaze::aodnet_init(cfg.seed);
    }
    echo_config({{"cmd", "train"}, {"data", data_dir}, {"out", out_ckpt},
                 {"loss", dehaze::to_string(cfg.loss)},
                 {"learning_rate", cfg.learning_rate}, {"momentum", cfg.momentum},
                 {"weight_decay", cfg.weight_decay},
                 {"grad_clip_norm", cfg.grad_clip_norm},
                 {"batch_size", cfg.batch_size}, {"epochs", cfg.epochs},
                 {"seed", cfg.seed}, {"crop_size", cfg.crop_size},
                 {"finetune", !finetune_ckpt.empty()}});

    auto pairs = load_pairs(data_dir);
    std::vector<double> history = dehaze::aodnet_train(net, pairs, cfg);

    std::string tmp = out_ckpt + ".tmp";
    dehaze::aodnet_save(net, tmp);
    fs::rename(tmp, out_ckpt);

    double first = history.front(), last = history.back();
    std::cout << "iterations " << history.size() << " first_loss " << format4(first)
              << " last_loss " << format4(last) << "\n";
    return 0;
}

int run_eval_quality(const std::string& pred_dir, const std::string& ref_dir,
                     const std::string& out_csv) {
    echo_config({{"cmd", "eval-quality"}, {"pred", pred_dir}, {"ref", ref_dir},
                 {"out", out_csv}});
    auto files = list_images(pred_dir);
    if (files.empty()) throw std::runtime_error("no images in " + pred_dir);
    std::ostringstream csv;
    csv << "image,psnr_db,ssim,ms_ssim\n";
    double mp = 0.0, ms = 0.0, mm = 0.0;
    for (const auto& path : files) {
        fs::path ref = fs::path(ref_dir) / path.filename();
        if (!fs::exists(ref))
            throw std::runtime_error("no reference for " + path.filename().string());
        dehaze::Image pred = dehaze::load_image(path.string());
        dehaze::Image refi = dehaze::load_image(ref.string());
        double p = dehaze::psnr(pred, refi);
        double s = dehaze::ssim(pred, refi);
        double m = dehaze::ms_ssim(pred, refi);
        csv << path.filename().string() << "," << format4(p) << "," << format4(s)
            << "," << format4(m) << "\n";
        mp += p / files.size();
        ms += s / files.size();
        mm += m / files.size();
    }
    csv << "mean," << format4(mp) << "," << format4(ms) << "," << format4(mm) << "\n";
    atomic_write_text(out_csv, csv.str());
    std::cout << csv.str();
    return 0;
}

int run_eval_map(const std::string& det_file, const std::string& gt_file, double iou_thr,
                 const std::string& out_csv, bool eleven_point) {
    echo_config({{"cmd", "eval-map"}, {"det", det_file}, {"gt", gt_file},
                 {"iou", iou_thr}, {"eleven_point", eleven_point}, {"out", out_csv}});
    auto dets = dehaze::load_detections(det_file);
    auto gts = dehaze::load_ground_truth(gt_file);
    dehaze::EvalConfig cfg;
    cfg.iou_threshold = iou_thr;
    cfg.eleven_point = eleven_point;
    dehaze::MapResult res = dehaze::mean_ap(dets, gts, cfg);
    std::ostringstream csv;
    csv << "class,ap\n";
    for (const auto& [cls, ap] : res.per_class_ap)
        csv << cls << "," << format4(ap) << "\n";
    csv << "mAP," << format4(res.map) << "\n";
    if (!out_csv.empty()) atomic_write_text(out_csv, csv.str());
    std::cout << csv.str();
    return 0;
}

int run_grl_demo(uint64_t seed, double lambda, int iters, int variant,
                 const std::string& out_json) {
    echo_config({{"cmd", "grl-demo"}, {"seed", seed}, {"lambda", lambda},
                 {"iters", iters}, {"target_variant", variant}, {"out", out_json}});
    dehaze::AdaptationReport rep =
        dehaze::run_adaptation_experiment(seed, lambda, iters, variant);
    json j{{"seed", rep.seed},
           {"lambda", rep.lambda},
           {"iters", rep.iters},
           {"baseline_target_acc", rep.baseline_target_acc},
           {"adapted_target_acc", rep.adapted_target_acc},
           {"domain_acc_final", rep.domain_acc_final},
           {"target_variant", rep.target_variant}};
    std::string text = j.dump(2) + "\n";
    if (!out_json.empty()) atomic_write_text(out_json, text);
    std::cout << text;
    return 0;
}

int run_gradcheck(const std::string& loss_sel, uint64_t seed) {
    echo_config({{"cmd", "gradcheck"}, {"loss", loss_sel}, {"seed", seed}});
    std::vector<dehaze::LossKind> kinds;
    if (loss_sel == "all") {
        kinds = {dehaze::LossKind::L1, dehaze::LossKind::L2, dehaze::LossKind::Ssim,
                 dehaze::LossKind::MsSsim, dehaze::LossKind::MsSsimL1,
                 dehaze::LossKind::MsSsimL2};
    } else {
        kinds = {dehaze::loss_kind_from_string(loss_sel)};
    }
    bool ok = true;
    for (auto kind : kinds) {
        double worst = 0.0;
        for (uint64_t pair = 0; pair < 4; ++pair) {
            std::mt19937_64 rng(seed * 977 + pair);
            std::uniform_real_distribution<double> uni(0.05, 0.95);
            dehaze::Image pred(8, 8, 3), target(8, 8, 3);
            for (double& v : pred.data) v = uni(rng);
            for (double& v : target.data) v = uni(rng);
            worst = std::max(worst,
                             dehaze::finite_diff_check(dehaze::make_loss(kind), pred,
                                                       target, 1e-4, 32, seed + pair));
        }
        double threshold = kind == dehaze::LossKind::L2 ? 1e-4 : 1e-3;
        bool pass = worst < threshold;
        ok = ok && pass;
        std::cout << dehaze::to_string(kind) << " max_rel_error "
                  << std::scientific << worst << (pass ? " PASS" : " FAIL") << "\n";
    }
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dehazing toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize hazy images");
    std::string s_in, s_out, s_beta = "0.5,2.0", s_a = "0.7,1.0", s_depth = "ramp";
    uint64_t s_seed = 0;
    synth->add_option("--in", s_in)->required();
    synth->add_option("--out", s_out)->required();
    synth->add_option("--seed", s_seed)->required();
    synth->add_option("--beta-range", s_beta);
    synth->add_option("--a-range", s_a);
    synth->add_option("--depth", s_depth)->check(CLI::IsMember({"ramp", "radial", "blob"}));

    // dehaze
    auto* dh = app.add_subcommand("dehaze", "apply a dehazing cascade");
    std::string d_in, d_out, d_method;
    dh->add_option("--in", d_in)->required();
    dh->add_option("--out", d_out)->required();
    dh->add_option("--method", d_method)->required();

    // train
    auto* tr = app.add_subcommand("train", "train the dehazing network");
    std::string t_data, t_loss = "l2", t_out, t_config, t_finetune;
    uint64_t t_seed = 0;
    int t_epochs = 14;
    tr->add_option("--data", t_data)->required();
    tr->add_option("--loss", t_loss)
        ->check(CLI::IsMember({"l1", "l2", "ssim", "msssim", "msssim_l1", "msssim_l2"}));
    tr->add_option("--out", t_out)->required();
    tr->add_option("--config", t_config);
    tr->add_option("--finetune", t_finetune);
    tr->add_option("--seed", t_seed);
    tr->add_option("--epochs", t_epochs);

    // eval-quality
    auto* eq = app.add_subcommand("eval-quality", "PSNR/SSIM/MS-SSIM report");
    std::string q_pred, q_ref, q_out;
    eq->add_option("--pred", q_pred)->required();
    eq->add_option("--ref", q_ref)->required();
    eq->add_option("--out", q_out)->required();

    // eval-map
    auto* em = app.add_subcommand("eval-map", "mAP report");
    std::string m_det, m_gt, m_out;
    double m_iou = 0.5;
    bool m_eleven = false;
    em->add_option("--det", m_det)->required();
    em->add_option("--gt", m_gt)->required();
    em->add_option("--iou", m_iou);
    em->add_option("--out", m_out);
    em->add_flag("--eleven-point", m_eleven);

    // grl-demo
    auto* gd = app.add_subcommand("grl-demo", "domain adaptation demo");
    uint64_t g_seed = 1;
    double g_lambda = 0.1;
    int g_iters = 2000, g_variant = 1;
    std::string g_out;
    gd->add_option("--seed", g_seed);
    gd->add_option("--lambda", g_lambda);
    gd->add_option("--iters", g_iters);
    gd->add_option("--target-variant", g_variant)->check(CLI::IsMember({1, 2}));
    gd->add_option("--out", g_out);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::string c_loss = "all";
    uint64_t c_seed = 0;
    gc->add_option("--loss", c_loss)
        ->check(CLI::IsMember({"all", "l1", "l2", "ssim", "msssim", "msssim_l1",
                               "msssim_l2"}));
    gc->add_option("--seed", c_seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed())
            return run_synth(s_in, s_out, s_seed, s_beta, s_a, s_depth);
        if (dh->parsed()) return run_dehaze(d_in, d_out, d_method);
        if (tr->parsed())
            return run_train(t_data, t_loss, t_out, t_config, t_finetune, t_seed,
                             t_epochs);
        if (eq->parsed()) return run_eval_quality(q_pred, q_ref, q_out);
        if (em->parsed()) return run_eval_map(m_det, m_gt, m_iou, m_out, m_eleven);
        if (gd->parsed()) return run_grl_demo(g_seed, g_lambda, g_iters, g_variant, g_out);
        if (gc->parsed()) return run_gradcheck(c_loss, c_seed);
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
