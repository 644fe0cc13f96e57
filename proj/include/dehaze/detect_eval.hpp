#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dehaze {

struct BBox {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    bool valid() const { return x_min < x_max && y_min < y_max; }
    double area() const { return (x_max - x_min) * (y_max - y_min); }

    bool operator<(const BBox& o) const {
        return std::tie(x_min, y_min, x_max, y_max) <
               std::tie(o.x_min, o.y_min, o.x_max, o.y_max);
    }
};

struct Detection {
    std::string image_id;
    std::string class_name;
    BBox bbox;
    double score = 0.0;
};

struct GtBox {
    std::string image_id;
    std::string class_name;
    BBox bbox;
};

inline const std::vector<std::string> kRttsClasses = {"person", "bicycle", "bus",
                                                      "car", "motorbike"};

struct EvalConfig {
    double iou_threshold = 0.5;
    std::vector<std::string> classes = kRttsClasses;
    bool eleven_point = false;  // 11-point interpolation instead of all-point
};

inline double iou(const BBox& a, const BBox& b) {
    double ix = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
    double iy = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

struct MatchResult {
    std::vector<bool> tp;  // per detection, in the sorted evaluation order
    size_t n_gt = 0;
};

// Greedy matching in descending score order; each GT used at most once;
// ties broken by image id then bbox for determinism.
inline MatchResult match_detections(std::vector<Detection> dets,
                                    const std::vector<GtBox>& gts,
                                    double threshold) {
    std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.bbox < b.bbox;
    });

    std::map<std::string, std::vector<size_t>> gt_by_image;
    for (size_t i = 0; i < gts.size(); ++i)
        gt_by_image[gts[i].image_id].push_back(i);
    std::vector<bool> gt_used(gts.size(), false);

    MatchResult res;
    res.n_gt = gts.size();
    res.tp.resize(dets.size(), false);
    for (size_t d = 0; d < dets.size(); ++d) {
        auto it = gt_by_image.find(dets[d].image_id);
        if (it == gt_by_image.end()) continue;
        double best_iou = 0.0;
        size_t best_gt = gts.size();
        for (size_t gi : it->second) {
            if (gt_used[gi]) continue;
            double ov = iou(dets[d].bbox, gts[gi].bbox);
            if (ov >= threshold && ov > best_iou) {
                best_iou = ov;
                best_gt = gi;
            }
        }
        if (best_gt < gts.size()) {
            gt_used[best_gt] = true;
            res.tp[d] = true;
        }
    }
    return res;
}

// Area under the interpolated precision-recall curve.
inline double average_precision(const std::vector<bool>& flags, size_t n_gt,
                                bool eleven_point = false) {
    if (n_gt == 0) return 0.0;
    std::vector<double> precision, recall;
    size_t tp = 0;
    for (size_t i = 0; i < flags.size(); ++i) {
        if (flags[i]) ++tp;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    }
    auto p_interp = [&](double r) {
        double best = 0.0;
        for (size_t i = 0; i < recall.size(); ++i)
            if (recall[i] >= r) best = std::max(best, precision[i]);
        return best;
    };
    if (eleven_point) {
        double acc = 0.0;
        for (int k = 0; k <= 10; ++k) acc += p_interp(k / 10.0);
        return acc / 11.0;
    }
    double ap = 0.0, prev_r = 0.0;
    for (size_t i = 0; i < recall.size(); ++i) {
        if (recall[i] > prev_r) {
            ap += (recall[i] - prev_r) * p_interp(recall[i]);
            prev_r = recall[i];
        }
    }
    return ap;
}

struct MapResult {
    std::map<std::string, double> per_class_ap;
    double map = 0.0;
};

// Unweighted mean AP over classes present in the ground truth.
inline MapResult mean_ap(const std::vector<Detection>& dets,
                         const std::vector<GtBox>& gts, const EvalConfig& cfg = {}) {
    std::set<std::string> gt_classes;
    for (const auto& g : gts) gt_classes.insert(g.class_name);

    MapResult res;
    int counted = 0;
    for (const std::string& cls : cfg.classes) {
        std::vector<Detection> cd;
        std::vector<GtBox> cg;
        for (const auto& d : dets)
            if (d.class_name == cls) cd.push_back(d);
        for (const auto& g : gts)
            if (g.class_name == cls) cg.push_back(g);
        if (cg.empty() && cd.empty()) continue;  // class absent entirely: skip
        MatchResult m = match_detections(cd, cg, cfg.iou_threshold);
        double ap = average_precision(m.tp, m.n_gt, cfg.eleven_point);
        res.per_class_ap[cls] = ap;
        if (gt_classes.count(cls)) {
            res.map += ap;
            ++counted;
        }
    }
    if (counted > 0) res.map /= counted;
    return res;
}

namespace detail {

inline BBox parse_bbox(const nlohmann::json& j, const std::string& path, size_t line) {
    if (!j.is_array() || j.size() != 4)
        throw std::runtime_error(path + ":" + std::to_string(line) +
                                 ": bbox must be [x_min,y_min,x_max,y_max]");
    BBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!b.valid())
        throw std::runtime_error(path + ":" + std::to_string(line) +
                                 ": degenerate bbox");
    return b;
}

}  // namespace detail

// JSON-lines: {"image": str, "class": str, "bbox": [..], "score": float}
inline std::vector<Detection> load_detections(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open detections file: " + path);
    std::vector<Detection> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            Detection d;
            d.image_id = j.at("image").get<std::string>();
            d.class_name = j.at("class").get<std::string>();
            d.bbox = detail::parse_bbox(j.at("bbox"), path, lineno);
            d.score = j.at("score").get<double>();
            if (d.score < 0.0 || d.score > 1.0)
                throw std::runtime_error("score out of [0,1]");
            out.push_back(std::move(d));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                                     e.what());
        }
    }
    return out;
}

inline std::vector<GtBox> load_ground_truth(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open ground-truth file: " + path);
    std::vector<GtBox> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            GtBox g;
            g.image_id = j.at("image").get<std::string>();
            g.class_name = j.at("class").get<std::string>();
            g.bbox = detail::parse_bbox(j.at("bbox"), path, lineno);
            out.push_back(std::move(g));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " +
                                     e.what());
        }
    }
    return out;
}

inline void save_detections(const std::vector<Detection>& dets, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write detections file: " + path);
    for (const auto& d : dets) {
        nlohmann::json j{{"image", d.image_id},
                         {"class", d.class_name},
                         {"bbox", {d.bbox.x_min, d.bbox.y_min, d.bbox.x_max, d.bbox.y_max}},
                         {"score", d.score}};
        f << j.dump() << "\n";
    }
}

inline void save_ground_truth(const std::vector<GtBox>& gts, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write ground-truth file: " + path);
    for (const auto& g : gts) {
        nlohmann::json j{{"image", g.image_id},
                         {"class", g.class_name},
                         {"bbox", {g.bbox.x_min, g.bbox.y_min, g.bbox.x_max, g.bbox.y_max}}};
        f << j.dump() << "\n";
    }
}

}  // namespace dehaze
