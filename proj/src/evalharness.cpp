#include "rflow/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "rflow/anchored.hpp"
#include "rflow/coupling.hpp"
#include "rflow/errors.hpp"
#include "rflow/parallel.hpp"

namespace rflow {

namespace {

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Balanced label vector: n/K copies of each label, n must divide evenly.
std::vector<int> balanced_labels(std::size_t n, std::size_t cond_count) {
    if (n % cond_count != 0) {
        throw ValueError("sample count must be a multiple of the label count");
    }
    std::vector<int> labels(n);
    std::size_t per = n / cond_count;
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i / per);
    return labels;
}

Tensor reference_samples(const ToyTask& task, std::span<const int> labels, Rng& rng) {
    Tensor out = Tensor::zeros({labels.size(), task.dim});
    std::span<double> data = out.data_mut();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Tensor row = sample_conditional(task, rng, labels[i], 1);
        std::copy_n(row.data().data(), task.dim, &data[i * task.dim]);
    }
    return out;
}

struct RepDraw {
    Tensor z0;
    Tensor ref;
    std::vector<int> labels;
};

RepDraw draw_rep(const ToyTask& task, std::size_t n, Rng& rep_rng) {
    RepDraw draw;
    draw.labels = balanced_labels(n, task.num_conditions);
    draw.z0 = sample_noise(rep_rng, n, task.dim);
    draw.ref = reference_samples(task, draw.labels, rep_rng);
    return draw;
}

double mean_of(std::span<const double> xs) {
    double acc = 0.0;
    for (double x : xs) acc += x;
    return acc / static_cast<double>(xs.size());
}

double stderr_of(std::span<const double> xs, double mean) {
    if (xs.size() < 2) return 0.0;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size() - 1);
    return std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

double wasserstein2(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("wasserstein2 needs matching [n, d] sample sets");
    }
    if (a.rows() == 0) throw ValueError("wasserstein2 needs at least one sample");
    Assignment assign = immiscible_assign(a, b);
    return std::sqrt(assign.total_cost / static_cast<double>(a.rows()));
}

double energy_distance(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.cols() != b.cols()) {
        throw ShapeError("energy_distance needs [n, d] and [m, d] sample sets");
    }
    const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
    if (n < 2 || m < 2) throw ValueError("energy_distance needs at least 2 samples per side");
    auto dist = [d](std::span<const double> xs, std::size_t i, std::span<const double> ys,
                    std::size_t j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double diff = xs[i * d + c] - ys[j * d + c];
            acc += diff * diff;
        }
        return std::sqrt(acc);
    };
    std::span<const double> av = a.data();
    std::span<const double> bv = b.data();
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) ab += dist(av, i, bv, j);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) aa += dist(av, i, av, j);
    }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) bb += dist(bv, i, bv, j);
    }
    ab /= static_cast<double>(n) * static_cast<double>(m);
    aa /= static_cast<double>(n) * static_cast<double>(n);
    bb /= static_cast<double>(m) * static_cast<double>(m);
    return 2.0 * ab - aa - bb;
}

double class_conditional_w2(const Tensor& gen, std::span<const int> gen_labels, const Tensor& ref,
                            std::span<const int> ref_labels, std::size_t cond_count) {
    if (gen_labels.size() != gen.rows() || ref_labels.size() != ref.rows()) {
        throw ShapeError("class_conditional_w2: one label per row");
    }
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t label = 0; label < cond_count; ++label) {
        std::vector<std::size_t> gi, ri;
        for (std::size_t i = 0; i < gen_labels.size(); ++i) {
            if (gen_labels[i] == static_cast<int>(label)) gi.push_back(i);
        }
        for (std::size_t i = 0; i < ref_labels.size(); ++i) {
            if (ref_labels[i] == static_cast<int>(label)) ri.push_back(i);
        }
        if (gi.size() != ri.size()) {
            throw ValueError("class_conditional_w2: label multisets differ");
        }
        if (gi.empty()) continue;
        const std::size_t d = gen.cols();
        Tensor ga = Tensor::zeros({gi.size(), d});
        Tensor rb = Tensor::zeros({ri.size(), d});
        for (std::size_t i = 0; i < gi.size(); ++i) {
            std::copy_n(gen.row_span(gi[i]).data(), d, ga.row_span_mut(i).data());
            std::copy_n(ref.row_span(ri[i]).data(), d, rb.row_span_mut(i).data());
        }
        acc += wasserstein2(ga, rb);
        used += 1;
    }
    if (used == 0) throw ValueError("class_conditional_w2: no labels present");
    return acc / static_cast<double>(used);
}

std::vector<SweepGroup> group_rows(std::span<const SweepRow> rows) {
    std::map<std::tuple<std::size_t, double, bool>, std::vector<const SweepRow*>> cells;
    for (const SweepRow& row : rows) {
        cells[{row.steps, row.omega, row.anchored}].push_back(&row);
    }
    std::vector<SweepGroup> out;
    for (const auto& [key, members] : cells) {
        SweepGroup g;
        g.steps = std::get<0>(key);
        g.omega = std::get<1>(key);
        g.anchored = std::get<2>(key);
        g.reps = members.size();
        std::vector<double> w2s, energies;
        for (const SweepRow* row : members) {
            w2s.push_back(row->w2);
            energies.push_back(row->energy);
        }
        g.w2_mean = mean_of(w2s);
        g.w2_stderr = stderr_of(w2s, g.w2_mean);
        g.energy_mean = mean_of(energies);
        g.energy_stderr = stderr_of(energies, g.energy_mean);
        out.push_back(g);
    }
    return out;
}

std::vector<SweepRow> few_step_sweep(const VelocityField& field, const ToyTask& task,
                                     std::span<const std::size_t> step_list, std::size_t n,
                                     std::size_t reps, Rng& rng) {
    if (step_list.empty()) throw ValueError("few_step_sweep needs at least one step count");
    if (reps < 1) throw ValueError("few_step_sweep needs reps >= 1");
    std::vector<SweepRow> rows(step_list.size() * reps);
    parallel_for(0, reps, [&](std::size_t rep_begin, std::size_t rep_end) {
        for (std::size_t rep = rep_begin; rep < rep_end; ++rep) {
            Rng rep_rng = rng.split(rep);
            RepDraw draw = draw_rep(task, n, rep_rng);
            GuidanceSpec spec;  // omega = 1, plain conditional
            for (std::size_t si = 0; si < step_list.size(); ++si) {
                Trajectory traj =
                    euler_simulate(field, spec, draw.z0, draw.labels, step_list[si]);
                SweepRow row;
                row.steps = step_list[si];
                row.omega = 1.0;
                row.anchored = false;
                row.rep = rep;
                row.w2 = class_conditional_w2(traj.final_state(), draw.labels, draw.ref,
                                              draw.labels, task.num_conditions);
                row.energy = energy_distance(traj.final_state(), draw.ref);
                rows[rep * step_list.size() + si] = row;
            }
        }
    });
    return rows;
}

std::vector<SweepRow> cfg_sweep(const VelocityField& field, const ToyTask& task,
                                std::span<const double> omegas, std::size_t steps, std::size_t n,
                                std::size_t reps, Rng& rng) {
    if (omegas.empty()) throw ValueError("cfg_sweep needs at least one omega");
    if (reps < 1) throw ValueError("cfg_sweep needs reps >= 1");
    const std::size_t per_rep = omegas.size() * 2;
    std::vector<SweepRow> rows(per_rep * reps);
    parallel_for(0, reps, [&](std::size_t rep_begin, std::size_t rep_end) {
        for (std::size_t rep = rep_begin; rep < rep_end; ++rep) {
            Rng rep_rng = rng.split(rep);
            RepDraw draw = draw_rep(task, n, rep_rng);
            for (std::size_t oi = 0; oi < omegas.size(); ++oi) {
                const double omega = omegas[oi];
                GuidanceSpec spec;
                spec.omega = omega;
                Trajectory plain = euler_simulate(field, spec, draw.z0, draw.labels, steps);
                AnchoredOptions opts;
                opts.omega = omega;
                opts.steps = steps;
                AnchoredResult anchored =
                    anchored_generate(field, draw.z0, draw.labels, opts);
                for (int variant = 0; variant < 2; ++variant) {
                    const Tensor& samples =
                        variant ? anchored.final_state : plain.final_state();
                    SweepRow row;
                    row.steps = steps;
                    row.omega = omega;
                    row.anchored = variant == 1;
                    row.rep = rep;
                    row.w2 = class_conditional_w2(samples, draw.labels, draw.ref, draw.labels,
                                                  task.num_conditions);
                    row.energy = energy_distance(samples, draw.ref);
                    rows[rep * per_rep + oi * 2 + variant] = row;
                }
            }
        }
    });
    return rows;
}

StraightnessEstimate straightness_eval(const VelocityField& field, std::size_t steps,
                                       std::size_t count, Rng& rng) {
    if (count < 1) throw ValueError("straightness_eval needs count >= 1");
    Rng local = rng.split(0);
    Tensor z0 = sample_noise(local, count, field.dim);
    std::vector<int> labels(count);
    for (auto& l : labels) l = static_cast<int>(local.uniform_index(field.cond_count()));
    GuidanceSpec spec;  // plain conditional field
    Trajectory traj = euler_simulate(field, spec, z0, labels, steps);
    std::vector<double> values = straightness_rows(traj);
    return straightness_estimate(values);
}

void write_eval_json(const EvalReport& report, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["model_id"] = report.model_id;
    j["seed"] = report.seed;
    j["samples"] = report.samples;
    j["repetitions"] = report.repetitions;
    j["rows"] = nlohmann::ordered_json::array();
    for (const SweepRow& row : report.rows) {
        j["rows"].push_back({{"steps", row.steps},
                             {"omega", row.omega},
                             {"anchored", row.anchored},
                             {"rep", row.rep},
                             {"w2", row.w2},
                             {"energy", row.energy}});
    }
    j["groups"] = nlohmann::ordered_json::array();
    for (const SweepGroup& g : group_rows(report.rows)) {
        j["groups"].push_back({{"steps", g.steps},
                               {"omega", g.omega},
                               {"anchored", g.anchored},
                               {"reps", g.reps},
                               {"w2_mean", g.w2_mean},
                               {"w2_stderr", g.w2_stderr},
                               {"energy_mean", g.energy_mean},
                               {"energy_stderr", g.energy_stderr}});
    }
    if (report.has_straightness) {
        j["straightness"] = {{"mean", report.straightness.mean},
                             {"stderr", report.straightness.stderr_},
                             {"log_mean", report.straightness.log_mean},
                             {"count", report.straightness.count}};
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << j.dump(2) << "\n";
    if (!out) throw Error("short write to '" + path.string() + "'");
}

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << "model,steps,omega,anchored,rep,w2,energy\n";
    for (const SweepRow& row : report.rows) {
        out << report.model_id << "," << row.steps << "," << format_double(row.omega) << ","
            << (row.anchored ? 1 : 0) << "," << row.rep << "," << format_double(row.w2) << ","
            << format_double(row.energy) << "\n";
    }
    if (!out) throw Error("short write to '" + path.string() + "'");
}

}  // namespace rflow
