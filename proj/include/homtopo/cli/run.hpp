#pragma once

// Dispatch of a resolved configuration to the optimizers, artifact writing
// and the mapping of failures to exit codes.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "homtopo/cli/config.hpp"
#include "homtopo/dehomog/conformal.hpp"
#include "homtopo/dehomog/lattice.hpp"
#include "homtopo/dehomog/micro_opt.hpp"
#include "homtopo/homog/micro_table.hpp"
#include "homtopo/io/csv.hpp"
#include "homtopo/io/vtk.hpp"
#include "homtopo/opt/relaxed.hpp"
#include "homtopo/opt/thickness.hpp"

namespace homtopo {

enum ExitCode : int { kExitOk = 0, kExitOther = 1, kExitConfig = 2, kExitNumerical = 3, kExitSingularity = 4 };

struct RunReport {
    std::vector<std::string> outputs;  // file names relative to the output directory
    Json summary = Json::object();
};

namespace detail {

class Artifacts {
  public:
    Artifacts(const std::string &dir, RunReport &report) : dir_(dir), report_(report) {
        std::filesystem::create_directories(dir_);
    }
    std::string path(const std::string &name) {
        report_.outputs.push_back(name);
        return (dir_ / name).string();
    }

  private:
    std::filesystem::path dir_;
    RunReport &report_;
};

inline Eigen::Matrix<double, Eigen::Dynamic, 2> nodal_vectors(const VecX &u) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>>(u.data(), u.size() / 2, 2);
}

inline ElasticProblem elastic_problem(const RunConfig &c) {
    ElasticProblem p;
    p.mesh = c.mesh();
    p.moduli = c.moduli;
    p.body_force = c.body_force;
    p.volume = c.volume;
    return p;
}

inline RelaxedOptions relaxed_options(const RunConfig &c) {
    RelaxedOptions o;
    o.iterations = c.iterations;
    o.tolerance = c.tolerance;
    o.penalization_iterations = c.penalization_iterations;
    o.theta_min = c.theta_min;
    o.step = c.step;
    return o;
}

inline void check_finite(const OptHistory &h) {
    for (const auto &r : h.records)
        if (!std::isfinite(r.J) || !std::isfinite(r.volume))
            throw NumericalError("non-finite objective at iteration " + std::to_string(r.iter));
}

/// Design with the state recomputed from given hole sizes and angles.
inline MicroDesign design_from_fields(const ElasticProblem &prob, const MicroTable &table, VecX m1, VecX m2,
                                      VecX alpha) {
    const Mesh2D &mesh = prob.mesh;
    const int ne = mesh.num_elements();
    MicroDesign d;
    d.m1 = std::move(m1);
    d.m2 = std::move(m2);
    d.alpha = std::move(alpha);
    d.hooke.assign(ne, Hooke2D(Mat3::Zero()));
    d.unrotated.assign(ne, Hooke2D(Mat3::Zero()));
    for (int e = 0; e < ne; ++e) {
        if (!mesh.active[e]) continue;
        d.unrotated[e] = table.lookup(Vec2(d.m1(e), d.m2(e))).a;
        d.unrotated[e].K = 0.5 * (d.unrotated[e].K + d.unrotated[e].K.transpose());
        d.hooke[e] = rotate_hooke(d.unrotated[e], d.alpha(e));
        d.hooke[e].K = 0.5 * (d.hooke[e].K + d.hooke[e].K.transpose());
    }
    d.u = solve(assemble_elasticity(mesh, d.hooke, prob.body_force)).x;
    const double J = elastic_load(mesh, prob.body_force).dot(d.u);
    d.history.push({0, J, active_mean(mesh, d.density()), 0.0, 0.0, 0.0, 0.0});
    d.b = OrientationField::from_angles(Association::PerElement, d.alpha);
    d.gauss_stress = element_gauss_stresses(mesh, d.hooke, d.u);
    return d;
}

inline MicroDesign read_design(const std::string &path, const ElasticProblem &prob, const MicroTable &table) {
    const CsvTable t = CsvTable::read(path);
    const std::vector<std::string> want{"index", "m1", "m2", "alpha"};
    if (t.header != want) throw ConfigError({path + ": expected columns index,m1,m2,alpha"});
    const int ne = prob.mesh.num_elements();
    if (static_cast<int>(t.rows.size()) != ne)
        throw ConfigError({path + ": " + std::to_string(t.rows.size()) + " rows for " + std::to_string(ne) +
                           " elements"});
    VecX m1(ne), m2(ne), alpha(ne);
    for (int e = 0; e < ne; ++e) {
        m1(e) = t.rows[e][1];
        m2(e) = t.rows[e][2];
        alpha(e) = t.rows[e][3];
        if (!(m1(e) >= 0 && m1(e) <= 1 && m2(e) >= 0 && m2(e) <= 1))
            throw ConfigError({path + ": hole sizes must lie in [0, 1] (row " + std::to_string(e) + ")"});
    }
    return design_from_fields(prob, table, m1, m2, alpha);
}

inline MicroTable table_for(const RunConfig &c) {
    if (!c.table_path.empty()) return MicroTable::load(c.table_path);
    return build_micro_table(c.moduli, c.table_samples, c.table_resolution, c.ersatz);
}

// ---------------------------------------------------------------------------

inline void run_cell_table(const RunConfig &c, Artifacts &out, RunReport &rep) {
    const MicroTable t = build_micro_table(c.moduli, c.table_samples, c.table_resolution, c.ersatz);
    t.save(out.path("table.csv"));
    rep.summary["samples"] = t.n_m;
}

inline void run_thickness(const RunConfig &c, Artifacts &out, RunReport &rep) {
    ThicknessProblem p;
    p.mesh = c.mesh();
    p.model = c.thickness_model == "plate" ? ThicknessModel::Plate : ThicknessModel::Membrane;
    p.plate = c.moduli;
    p.source = element_field(VecX::Constant(p.mesh.num_elements(), c.source));
    p.body_force = c.body_force;
    p.h_min = c.h_min;
    p.h_max = c.h_max;
    p.h0 = c.h0;
    ThicknessOptions o;
    o.iterations = c.iterations;
    o.tolerance = c.tolerance;
    o.step = c.step;
    o.regularization = c.regularization;
    const VecX h0 = VecX::Constant(p.mesh.num_elements(), c.h0);
    const ThicknessResult r =
        c.thickness_method == "oc" ? optimality_criteria_run(p, h0, o) : projected_gradient_run(p, h0, o);
    check_finite(r.history);
    r.history.write_thickness_csv(out.path("history.csv"));
    VtkWriter vtk(p.mesh);
    vtk.cell_scalar("h", r.h);
    const VecX u = solve_state(p, r.h);
    if (p.model == ThicknessModel::Plate) vtk.point_vector("u", nodal_vectors(u));
    else vtk.point_scalar("u", u);
    vtk.write(out.path("fields.vtk"));
    rep.summary["J"] = r.history.back().J;
    rep.summary["iterations"] = r.history.size() - 1;
    rep.summary["converged"] = r.converged;
}

inline void run_topopt_cond(const RunConfig &c, Artifacts &out, RunReport &rep) {
    ConductivityProblem p;
    p.mesh = c.mesh();
    p.source = element_field(VecX::Constant(p.mesh.num_elements(), c.source));
    p.alpha = c.alpha;
    p.beta = c.beta;
    p.volume = c.volume;
    p.objective = c.objective == "torsion" ? ConductivityObjective::Torsion : ConductivityObjective::Compliance;
    const RelaxedResult r =
        alt_min_conductivity(p, VecX::Constant(p.mesh.num_elements(), c.volume), relaxed_options(c));
    check_finite(r.history);
    r.history.write_topopt_csv(out.path("history.csv"));
    const RelaxedState st = conductivity_state(p, rank1_field(p, r.design.theta, r.design.phi));
    VtkWriter vtk(p.mesh);
    vtk.cell_scalar("theta", r.design.theta);
    vtk.cell_scalar("phi", r.design.phi);
    vtk.point_scalar("u", st.u);
    vtk.write(out.path("fields.vtk"));
    rep.summary["J"] = r.history.back().J;
    rep.summary["composite_gray"] = r.composite_gray;
    rep.summary["gray"] = gray_level(p.mesh, r.design.theta);
    rep.summary["converged"] = r.converged;
}

inline void run_topopt_elastic(const RunConfig &c, Artifacts &out, RunReport &rep) {
    const ElasticProblem p = elastic_problem(c);
    const ElasticResult r = alt_min_elastic_compliance(p, relaxed_options(c));
    check_finite(r.history);
    r.history.write_topopt_csv(out.path("history.csv"));
    VtkWriter vtk(p.mesh);
    vtk.cell_scalar("theta", r.theta);
    vtk.cell_scalar("angle", r.angle);
    vtk.point_vector("u", nodal_vectors(r.u));
    vtk.write(out.path("fields.vtk"));
    rep.summary["J"] = r.history.back().J;
    rep.summary["composite_gray"] = r.composite_gray;
    rep.summary["gray"] = gray_level(p.mesh, r.theta);
    rep.summary["converged"] = r.converged;
}

inline void run_simp(const RunConfig &c, Artifacts &out, RunReport &rep) {
    const ElasticProblem p = elastic_problem(c);
    const SimpResult r = simp_run(p, c.simp_schedule, relaxed_options(c));
    check_finite(r.history);
    r.history.write_topopt_csv(out.path("history.csv"));
    VtkWriter vtk(p.mesh);
    vtk.cell_scalar("theta", r.theta);
    vtk.point_vector("u", nodal_vectors(r.u));
    vtk.write(out.path("fields.vtk"));
    rep.summary["J"] = r.history.back().J;
    rep.summary["phase_gray"] = r.phase_gray;
}

inline void run_dehomog(const RunConfig &c, Artifacts &out, RunReport &rep) {
    const ElasticProblem p = elastic_problem(c);
    const Mesh2D &mesh = p.mesh;
    const MicroTable table = table_for(c);
    MicroDesign d;
    if (c.design_path.empty()) {
        MicroOptions mo;
        mo.iterations = c.micro_iterations;
        d = micro_param_opt(p, table, mo);
    } else {
        d = read_design(c.design_path, p, table);
    }
    check_finite(d.history);
    d.history.write_topopt_csv(out.path("history.csv"));
    {
        CsvTable t;
        t.header = {"index", "m1", "m2", "alpha"};
        for (int e = 0; e < mesh.num_elements(); ++e) t.rows.push_back({double(e), d.m1(e), d.m2(e), d.alpha(e)});
        t.write(out.path("design.csv"));
    }

    RegularizeOptions ro;
    ro.eta = c.eta;
    ro.iterations = c.newton_iterations;
    ro.presmooth = c.presmooth;
    const RegularizeResult reg = regularize_orientation(mesh, d.b, d.unrotated, d.gauss_stress, ro);
    {
        CsvTable t;
        t.header = {"stage", "residual", "objective"};
        for (size_t i = 0; i < std::min(reg.residual.size(), reg.objective.size()); ++i)
            t.rows.push_back({double(i), reg.residual[i], reg.objective[i]});
        t.write(out.path("regularization.csv"));
    }
    VtkWriter vtk(mesh);
    vtk.cell_scalar("m1", d.m1);
    vtk.cell_scalar("m2", d.m2);
    vtk.cell_scalar("alpha", d.alpha);
    vtk.point_scalar("beta", reg.b.angles());
    rep.summary["J"] = d.history.back().J;
    rep.summary["residual_initial"] = reg.residual.front();
    rep.summary["residual_final"] = reg.residual.back();
    for (const auto &w : reg.warnings) std::cerr << "warning: " << w << "\n";

    const DilationField dil = dilation_field(mesh, reg.b);  // refuses singular fields
    vtk.point_scalar("r", dil.r);
    vtk.write(out.path("fields.vtk"));
    const CoverMap cover = conformal_map(mesh, reg.b, dil.r);
    LatticeOptions lo;
    lo.nodes_per_period = c.nodes_per_period;
    const LatticeShape raw = project_lattice(mesh, cover, d.m1, d.m2, c.epsilon, lo);
    const LatticeShape shape = postprocess(raw, mesh, c.feature_min);
    for (const auto &w : shape.warnings) std::cerr << "warning: " << w << "\n";
    write_svg(shape, out.path("lattice.svg"));
    write_lattice_vtk(shape, out.path("lattice.vtk"));
    rep.summary["conformal_energy"] = cover.energy;
    rep.summary["area_projected"] = lattice_area(raw);
    rep.summary["area_cleaned"] = lattice_area(shape, true);
}

}  // namespace detail

/// Runs one command; throws on failure.
inline RunReport run(const RunConfig &c) {
    RunReport rep;
    detail::Artifacts out(c.output_dir, rep);
    if (c.command == "cell-table") detail::run_cell_table(c, out, rep);
    else if (c.command == "thickness") detail::run_thickness(c, out, rep);
    else if (c.command == "topopt-cond") detail::run_topopt_cond(c, out, rep);
    else if (c.command == "topopt-elastic") detail::run_topopt_elastic(c, out, rep);
    else if (c.command == "simp") detail::run_simp(c, out, rep);
    else if (c.command == "dehomog") detail::run_dehomog(c, out, rep);
    else throw ConfigError({"unknown command '" + c.command + "'"});
    return rep;
}

inline int exit_code_of(const std::exception &e) {
    if (dynamic_cast<const SingularityError *>(&e)) return kExitSingularity;
    if (dynamic_cast<const ConfigError *>(&e) || dynamic_cast<const InvalidArgument *>(&e)) return kExitConfig;
    if (dynamic_cast<const NumericalError *>(&e) || dynamic_cast<const SolverError *>(&e) ||
        dynamic_cast<const RigidModeError *>(&e))
        return kExitNumerical;
    return kExitOther;
}

inline void write_manifest(const RunConfig &c, const RunReport &rep, int code, const std::string &message) {
    Json m;
    m["command"] = c.command;
    m["config"] = c.resolved;
    m["outputs"] = rep.outputs;
    m["summary"] = rep.summary;
    m["exit_code"] = code;
    m["status"] = code == kExitOk ? "ok" : "failed";
    if (!message.empty()) m["message"] = message;
    std::filesystem::create_directories(c.output_dir);
    std::ofstream f(std::filesystem::path(c.output_dir) / "manifest.json", std::ios::binary);
    f << m.dump(2) << "\n";
}

/// Runs, writes the manifest and reports errors on `err`; returns the exit code.
inline int run_and_report(const RunConfig &c, std::ostream &err) {
    RunReport rep;
    int code = kExitOk;
    std::string message;
    try {
        rep = run(c);
    } catch (const SingularityError &e) {
        code = kExitSingularity;
        message = e.what();
        err << "error: " << message << "\n";
        for (const auto &[cell, charge] : e.charges) err << "  charge " << format_double(charge) << " at " << cell << "\n";
    } catch (const std::exception &e) {
        code = exit_code_of(e);
        message = e.what();
        err << "error: " << message << "\n";
    }
    write_manifest(c, rep, code, message);
    return code;
}

}  // namespace homtopo
