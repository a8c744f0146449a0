#include "splatfont/dca.hpp"
#include "splatfont/error.hpp"
#include "splatfont/glyph2cloud.hpp"
#include "splatfont/optimizer.hpp"
#include "splatfont/pipeline.hpp"
#include "splatfont/ply.hpp"
#include "splatfont/render.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace splatfont;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// 2D arrays come back as H x W, 3D as H x W x C.
py::array_t<double> to_numpy(const Image& img, bool squeeze_single = true) {
    std::vector<py::ssize_t> shape = {img.height, img.width};
    if (!(squeeze_single && img.channels == 1)) shape.push_back(img.channels);
    py::array_t<double> out(shape);
    std::copy(img.data.begin(), img.data.end(), out.mutable_data());
    return out;
}

Image from_numpy(const Array& a) {
    if (a.ndim() != 2 && a.ndim() != 3) throw ShapeMismatch("expected an H x W or H x W x C array");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1);
    std::copy(a.data(), a.data() + a.size(), img.data.begin());
    return img;
}

py::array_t<double> rows(const GaussianCloud& c, int cols, auto&& fill) {
    py::array_t<double> out({static_cast<py::ssize_t>(c.size()), static_cast<py::ssize_t>(cols)});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < c.size(); ++i) fill(c.gaussians[i], &v(static_cast<py::ssize_t>(i), 0));
    return out;
}

GaussianCloud cloud_from_arrays(const Array& pos, const Array& log_scale, const Array& rot, const Array& color,
                                const Array& opacity_logit, const py::array_t<int>& component_id, int num_components) {
    const auto n = pos.shape(0);
    auto check = [n](const py::array& a, py::ssize_t cols, const char* name) {
        if (a.shape(0) != n || (cols > 0 && (a.ndim() != 2 || a.shape(1) != cols)))
            throw ShapeMismatch(std::string(name) + " has the wrong shape");
    };
    check(pos, 3, "positions");
    check(log_scale, 3, "log_scales");
    check(rot, 4, "rotations");
    check(color, 3, "colors");
    check(opacity_logit, 0, "opacity_logits");
    check(component_id, 0, "component_ids");
    GaussianCloud c;
    c.num_components = num_components;
    c.gaussians.resize(static_cast<std::size_t>(n));
    const auto p = pos.unchecked<2>(), s = log_scale.unchecked<2>(), r = rot.unchecked<2>(), col = color.unchecked<2>();
    const auto o = opacity_logit.unchecked<1>();
    const auto id = component_id.unchecked<1>();
    for (py::ssize_t i = 0; i < n; ++i) {
        auto& g = c.gaussians[static_cast<std::size_t>(i)];
        g.position = Vec3(p(i, 0), p(i, 1), p(i, 2));
        g.log_scale = Vec3(s(i, 0), s(i, 1), s(i, 2));
        g.rotation = Vec4(r(i, 0), r(i, 1), r(i, 2), r(i, 3));
        g.color = Vec3(col(i, 0), col(i, 1), col(i, 2));
        g.opacity_logit = o(i);
        g.component_id = id(i);
    }
    return c;
}

nlohmann::json to_json(const py::handle& obj) {
    return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::object from_json(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "SplatFont3D core: Gaussian splat rendering, glyph lifting, DCA and the optimisation pipeline";

    static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
    py::register_exception<FormatError>(m, "FormatError", error.ptr());
    py::register_exception<IoError>(m, "IoError", error.ptr());
    py::register_exception<ShapeMismatch>(m, "ShapeMismatch", error.ptr());
    py::register_exception<EmptyMask>(m, "EmptyMask", error.ptr());
    py::register_exception<ProviderFailure>(m, "ProviderFailure", error.ptr());
    py::register_exception<BehindCamera>(m, "BehindCamera", error.ptr());

    py::class_<Camera>(m, "Camera")
        .def_readonly("width", &Camera::width)
        .def_readonly("height", &Camera::height)
        .def_readonly("focal", &Camera::focal)
        .def_readonly("rotation", &Camera::rotation)
        .def_readonly("translation", &Camera::translation)
        .def_readonly("principal_point", &Camera::principal_point)
        .def("center", &Camera::center)
        .def("to_camera", &Camera::to_camera);
    m.def("orbit_camera", &orbit_camera, py::arg("azimuth_deg"), py::arg("elevation_deg"), py::arg("radius"),
          py::arg("width"), py::arg("height"));
    m.def("front_camera", &front_camera, py::arg("width"), py::arg("height"), py::arg("distance") = 10.0);
    m.def("turntable_cameras", &turntable_cameras, py::arg("views"), py::arg("size"),
          py::arg("elevation_deg") = kTurntableElevation, py::arg("radius") = 2.5);

    py::class_<GaussianCloud>(m, "GaussianCloud")
        .def(py::init<>())
        .def_static("from_arrays", &cloud_from_arrays, py::arg("positions"), py::arg("log_scales"), py::arg("rotations"),
                    py::arg("colors"), py::arg("opacity_logits"), py::arg("component_ids"), py::arg("num_components") = 1)
        .def("__len__", &GaussianCloud::size)
        .def_readwrite("num_components", &GaussianCloud::num_components)
        .def("fingerprint", &GaussianCloud::fingerprint)
        .def_property_readonly("positions",
                               [](const GaussianCloud& c) {
                                   return rows(c, 3, [](const Gaussian3D& g, double* o) {
                                       for (int k = 0; k < 3; ++k) o[k] = g.position[k];
                                   });
                               })
        .def_property_readonly("log_scales",
                               [](const GaussianCloud& c) {
                                   return rows(c, 3, [](const Gaussian3D& g, double* o) {
                                       for (int k = 0; k < 3; ++k) o[k] = g.log_scale[k];
                                   });
                               })
        .def_property_readonly("rotations",
                               [](const GaussianCloud& c) {
                                   return rows(c, 4, [](const Gaussian3D& g, double* o) {
                                       for (int k = 0; k < 4; ++k) o[k] = g.rotation[k];
                                   });
                               })
        .def_property_readonly("colors",
                               [](const GaussianCloud& c) {
                                   return rows(c, 3, [](const Gaussian3D& g, double* o) {
                                       for (int k = 0; k < 3; ++k) o[k] = g.color[k];
                                   });
                               })
        .def_property_readonly("opacity_logits",
                               [](const GaussianCloud& c) {
                                   py::array_t<double> out(static_cast<py::ssize_t>(c.size()));
                                   for (std::size_t i = 0; i < c.size(); ++i) out.mutable_at(i) = c.gaussians[i].opacity_logit;
                                   return out;
                               })
        .def_property_readonly("component_ids", [](const GaussianCloud& c) {
            py::array_t<int> out(static_cast<py::ssize_t>(c.size()));
            for (std::size_t i = 0; i < c.size(); ++i) out.mutable_at(i) = c.gaussians[i].component_id;
            return out;
        });
    m.def("read_ply", &read_ply, py::arg("path"));
    m.def("write_ply", &write_ply, py::arg("path"), py::arg("cloud"));

    m.def(
        "render",
        [](const GaussianCloud& cloud, const Camera& cam, std::optional<int> component, const std::string& rasterizer,
           const Vec3& background) {
            RenderOptions opts;
            opts.background = background;
            if (rasterizer == "reference") opts.rasterizer = Rasterizer::Reference;
            else if (rasterizer != "tiled") throw ConfigError("rasterizer must be 'tiled' or 'reference'");
            RenderedImage r;
            {
                py::gil_scoped_release release;
                r = render(cloud, cam, component, opts);
            }
            return py::make_tuple(to_numpy(r.pixels), to_numpy(r.alpha));
        },
        py::arg("cloud"), py::arg("camera"), py::arg("component") = py::none(), py::arg("rasterizer") = "tiled",
        py::arg("background") = Vec3(1.0, 1.0, 1.0),
        "Returns (pixels H x W x 3, alpha H x W).");

    m.def(
        "build_label_map",
        [](const std::vector<Array>& heatmaps, double beta, double delta) {
            std::vector<ComponentHeatmap> hs;
            for (std::size_t i = 0; i < heatmaps.size(); ++i)
                hs.push_back({from_numpy(heatmaps[i]), static_cast<int>(i) + 1});
            const ComponentLabelMap map = build_label_map(hs, beta, delta);
            py::array_t<int> labels({map.height, map.width});
            std::copy(map.labels.begin(), map.labels.end(), labels.mutable_data());
            return py::make_tuple(labels, map.centroids);
        },
        py::arg("heatmaps"), py::arg("beta") = kDefaultDcaBeta, py::arg("delta") = kDefaultDcaDelta,
        "Labels are 1-based component ids; returns (labels H x W, centroids).");
    m.def(
        "fallback_segment", [](const Array& rgb) { return to_numpy(fallback_segment({from_numpy(rgb)}).values); },
        py::arg("rgb"));
    m.def(
        "blend_latents",
        [](const Array& zs, const Array& zp, std::vector<double> alpha, int k, int t_total, int t) {
            auto to_latent = [t](const Array& a) {
                LatentTensor l;
                l.values.assign(a.data(), a.data() + a.size());
                for (py::ssize_t d = 0; d < a.ndim(); ++d) l.shape.push_back(static_cast<std::size_t>(a.shape(d)));
                l.timestep = t;
                return l;
            };
            BlendSchedule sched;
            sched.alpha = std::move(alpha);
            sched.K = k;
            sched.T = t_total;
            const LatentTensor out = blend_latents(to_latent(zs), to_latent(zp), sched, t);
            py::array_t<double> arr(std::vector<py::ssize_t>(out.shape.begin(), out.shape.end()));
            std::copy(out.values.begin(), out.values.end(), arr.mutable_data());
            return arr;
        },
        py::arg("zs"), py::arg("zp"), py::arg("alpha"), py::arg("K"), py::arg("T"), py::arg("t"));
    m.def(
        "area_lambdas", [](const std::vector<double>& areas, double lambda0, double base) {
            return area_lambdas(areas, lambda0, base);
        },
        py::arg("areas"), py::arg("lambda0") = kGlobalLambda, py::arg("base") = 1.0);

    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def_property(
            "out", [](const PipelineConfig& c) { return c.out; },
            [](PipelineConfig& c, const std::filesystem::path& p) { c.out = p; })
        .def_property(
            "seed", [](const PipelineConfig& c) { return c.seed; },
            [](PipelineConfig& c, std::uint64_t s) {
                c.seed = s;
                c.optimize.seed = s;
            })
        .def_property(
            "iterations", [](const PipelineConfig& c) { return c.optimize.iterations; },
            [](PipelineConfig& c, int n) { c.optimize.iterations = n; })
        .def_property_readonly("num_components", &PipelineConfig::num_components);
    m.def("load_config", &load_config, py::arg("path"));
    m.def(
        "parse_config",
        [](const py::dict& doc, const std::filesystem::path& base_dir) { return parse_config(to_json(doc), base_dir); },
        py::arg("doc"), py::arg("base_dir"));
    m.def("cmd_init", &cmd_init, py::arg("config"), py::call_guard<py::gil_scoped_release>());
    m.def("cmd_optimize", &cmd_optimize, py::arg("config"), py::arg("cloud"), py::call_guard<py::gil_scoped_release>());
    m.def("cmd_render", &cmd_render, py::arg("config"), py::arg("cloud"), py::arg("views"), py::arg("size"),
          py::call_guard<py::gil_scoped_release>());
    m.def("cmd_assign", &cmd_assign, py::arg("config"), py::arg("cloud"), py::call_guard<py::gil_scoped_release>());
    m.def(
        "cmd_metrics",
        [](const PipelineConfig& cfg, const std::filesystem::path& cloud) {
            nlohmann::json j;
            {
                py::gil_scoped_release release;
                j = cmd_metrics(cfg, cloud);
            }
            return from_json(j);
        },
        py::arg("config"), py::arg("cloud"));
    m.def("cmd_export", &cmd_export, py::arg("config"), py::arg("cloud"), py::call_guard<py::gil_scoped_release>());
}
