#include <pybind11/numpy.h>
#include <pybind11/gil_safe_call_once.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "attnvpr/aggregation.hpp"
#include "attnvpr/attention.hpp"
#include "attnvpr/cli.hpp"
#include "attnvpr/error.hpp"
#include "attnvpr/file_util.hpp"
#include "attnvpr/fixture.hpp"
#include "attnvpr/geo_eval.hpp"
#include "attnvpr/retrieval.hpp"
#include "attnvpr/tensor_io.hpp"

namespace py = pybind11;
using namespace attnvpr;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<float> flat(const FloatArray& a, std::size_t ndim, const char* what) {
  if (static_cast<std::size_t>(a.ndim()) != ndim) {
    throw Error(ErrorCode::InvalidArgument, std::string(what) + " must have " + std::to_string(ndim) + " dimensions");
  }
  return {a.data(), a.data() + a.size()};
}

std::uint32_t dim32(const FloatArray& a, int axis) { return static_cast<std::uint32_t>(a.shape(axis)); }

RbfMode rbf_mode(const std::string& s) {
  if (s == "superposition") return RbfMode::Superposition;
  if (s == "exact") return RbfMode::ExactInterp;
  throw Error(ErrorCode::InvalidArgument, "rbf mode must be 'superposition' or 'exact', got '" + s + "'");
}

ClusterMode cluster_mode(const std::string& s) {
  if (s == "blended") return ClusterMode::Blended;
  if (s == "literal") return ClusterMode::Literal;
  throw Error(ErrorCode::InvalidArgument, "cluster mode must be 'blended' or 'literal', got '" + s + "'");
}

BaseWeights base_weights(const std::string& s) {
  if (s == "uniform") return BaseWeights::UniformOnes;
  if (s == "activation_norm") return BaseWeights::ActivationNorm;
  throw Error(ErrorCode::InvalidArgument, "base weights must be 'uniform' or 'activation_norm', got '" + s + "'");
}

FeatureMap feature_map(const FloatArray& x, const std::string& id = {}) {
  FeatureMap fm{id, 0, 0, 0, flat(x, 3, "feature map")};
  fm.channels = dim32(x, 0);
  fm.height = dim32(x, 1);
  fm.width = dim32(x, 2);
  return fm;
}

DescriptorDb make_db(const FloatArray& rows, const std::vector<std::string>& ids, const DoubleArray& geotags) {
  if (rows.ndim() != 2) throw Error(ErrorCode::InvalidArgument, "db rows must be a 2-d array");
  DescriptorDb db;
  db.dim = dim32(rows, 1);
  db.rows = flat(rows, 2, "db rows");
  db.ids = ids;
  if (geotags.size() == 0) {
    db.geotags.assign(ids.size(), GeoTag{});
  } else {
    if (geotags.ndim() != 2 || geotags.shape(1) != 2 || static_cast<std::size_t>(geotags.shape(0)) != ids.size()) {
      throw Error(ErrorCode::ShapeMismatch, "geotags must have shape (rows, 2)");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) db.geotags.push_back({geotags.at(i, 0), geotags.at(i, 1)});
  }
  if (static_cast<std::size_t>(rows.shape(0)) != ids.size()) {
    throw Error(ErrorCode::ShapeMismatch, "rows and ids differ in length");
  }
  return db;
}

py::list hits_list(const RankedList& r) {
  py::list out;
  for (const Hit& h : r.hits) {
    out.append(py::make_tuple(h.db_id, h.similarity, h.db_index, h.geotag.lat, h.geotag.lon));
  }
  return out;
}

py::dict report_dict(const RecallReport& r) {
  py::dict d;
  d["query_set"] = r.query_set;
  d["alpha"] = r.alpha;
  d["recalls"] = r.recalls;
  d["unreachable"] = r.unreachable;
  py::dict ranks;
  for (const auto& q : r.per_query) {
    ranks[py::str(q.query_id)] = q.first_correct_rank ? py::cast(*q.first_correct_rank) : py::none();
  }
  d["first_correct_rank"] = ranks;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attention-guided visual place recognition core";

  // Carries the error name in `.code`, e.g. "BadMagic".
  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&m] { return py::object(py::exception<Error>(m, "AttnvprError", PyExc_RuntimeError)); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& type = error_type.get_stored();
      py::object exc = type(e.what());
      exc.attr("code") = std::string(error_name(e.code()));
      PyErr_SetObject(type.ptr(), exc.ptr());
    }
  });

  // Tensor files.
  m.def(
      "read_feature_map",
      [](const fs::path& path) {
        const FeatureMap fm = read_feature_map(path);
        return py::make_tuple(fm.image_id,
                              to_array(fm.data, {fm.channels, fm.height, fm.width}));
      },
      py::arg("path"), "Returns (image_id, float32 array of shape (C, H, W)).");
  m.def(
      "write_feature_map",
      [](const fs::path& path, const std::string& image_id, const FloatArray& x) {
        write_feature_map(feature_map(x, image_id), path);
      },
      py::arg("path"), py::arg("image_id"), py::arg("features"));
  m.def(
      "read_db",
      [](const fs::path& path) {
        const DescriptorDb db = read_db(path);
        std::vector<double> geo;
        for (const GeoTag& g : db.geotags) {
          geo.push_back(g.lat);
          geo.push_back(g.lon);
        }
        const auto n = static_cast<py::ssize_t>(db.size());
        return py::make_tuple(db.ids, to_array(db.rows, {n, static_cast<py::ssize_t>(db.dim)}),
                              to_array(geo, {n, 2}));
      },
      py::arg("path"), "Returns (ids, float32 rows (N, D), float64 geotags (N, 2)).");
  m.def(
      "write_db",
      [](const fs::path& path, const std::vector<std::string>& ids, const FloatArray& rows,
         const DoubleArray& geotags) { write_db(make_db(rows, ids, geotags), path); },
      py::arg("path"), py::arg("ids"), py::arg("rows"), py::arg("geotags"));

  // Attention.
  m.def(
      "parse_attention_points",
      [](const std::string& text) -> py::object {
        Warnings warnings;
        const AttentionSpec spec = parse_attention_points(text, &warnings);
        if (spec.is_single_landmark()) return py::none();
        py::list out;
        for (const AttentionPoint& p : spec.points()) {
          py::dict d;
          d["x"] = p.x;
          d["y"] = p.y;
          d["weight"] = p.weight;
          d["reasoning"] = p.reasoning;
          out.append(d);
        }
        return out;
      },
      py::arg("text"), "Parses an LLM response; returns None for the single-landmark answer.");
  m.def(
      "rasterize_attention",
      [](const std::string& text, std::uint32_t height, std::uint32_t width, double sigma, const std::string& mode) {
        const AttentionMap a =
            rasterize_attention(parse_attention_points(text), height, width, RbfConfig{sigma, rbf_mode(mode)});
        return to_array(a.values, {a.height, a.width});
      },
      py::arg("text"), py::arg("height"), py::arg("width"), py::arg("sigma") = 0.2,
      py::arg("mode") = "superposition");

  // Aggregation.
  m.def(
      "gem_pool",
      [](const FloatArray& x, double p, py::object attention, double alpha, const std::string& base,
         bool normalize) {
        const FeatureMap fm = feature_map(x);
        WeightMap w = base_weight_map(fm, base_weights(base));
        if (!attention.is_none()) {
          const auto a = attention.cast<FloatArray>();
          AttentionMap am{dim32(a, 0), dim32(a, 1), flat(a, 2, "attention")};
          w = blend_weights(w, am, alpha);
        }
        const Descriptor d = gem_pool(fm, GemParams{p, base_weights(base)}, w);
        return to_array(normalize ? l2_normalize(d) : d, {static_cast<py::ssize_t>(d.size())});
      },
      py::arg("features"), py::arg("p") = 3.0, py::arg("attention") = py::none(), py::arg("alpha") = 0.0,
      py::arg("base_weights") = "uniform", py::arg("normalize") = true,
      "Attention-blended GeM over a (C, H, W) map.");
  m.def(
      "cluster_aggregate",
      [](const FloatArray& local, const FloatArray& assign, const FloatArray& attention, double alpha,
         const std::string& mode, const FloatArray& class_token) {
        LocalFeatures lf{"", dim32(local, 0), dim32(local, 1), flat(local, 2, "local features")};
        AssignmentMatrix am{"", dim32(assign, 0), dim32(assign, 1), flat(assign, 2, "assignment")};
        const std::vector<float> a(attention.data(), attention.data() + attention.size());
        const std::vector<float> ct(class_token.data(), class_token.data() + class_token.size());
        const Descriptor d = cluster_aggregate(lf, am, a, BlendConfig{alpha, cluster_mode(mode)}, ct);
        return to_array(d, {static_cast<py::ssize_t>(d.size())});
      },
      py::arg("local"), py::arg("assignment"), py::arg("attention"), py::arg("alpha"),
      py::arg("mode") = "blended", py::arg("class_token") = FloatArray(0),
      "Raw soft-assignment aggregation of (D, n) features with (K, n) assignment.");
  m.def(
      "l2_normalize",
      [](const FloatArray& v) {
        const Descriptor d = l2_normalize(std::span<const float>(v.data(), static_cast<std::size_t>(v.size())));
        return to_array(d, {static_cast<py::ssize_t>(d.size())});
      },
      py::arg("v"));

  // Retrieval.
  m.def(
      "search",
      [](const FloatArray& rows, const std::vector<std::string>& ids, const FloatArray& query, std::size_t top_n,
         const DoubleArray& geotags) {
        const DescriptorDb db = make_db(rows, ids, geotags);
        return hits_list(search(db, std::span<const float>(query.data(), static_cast<std::size_t>(query.size())),
                                top_n));
      },
      py::arg("rows"), py::arg("ids"), py::arg("query"), py::arg("top_n"), py::arg("geotags") = DoubleArray(0),
      "Exact cosine search; returns [(id, similarity, row, lat, lon)].");
  m.def(
      "query_expand",
      [](const FloatArray& rows, const std::vector<std::string>& ids, const FloatArray& query, std::size_t k,
         double alpha) {
        const DescriptorDb db = make_db(rows, ids, DoubleArray(0));
        const std::span<const float> q(query.data(), static_cast<std::size_t>(query.size()));
        const Descriptor d = query_expand(q, search(db, q, k), db, QeConfig{alpha, k});
        return to_array(d, {static_cast<py::ssize_t>(d.size())});
      },
      py::arg("rows"), py::arg("ids"), py::arg("query"), py::arg("k") = 5, py::arg("alpha") = 0.8);

  // Evaluation.
  m.def(
      "haversine", [](double lat1, double lon1, double lat2, double lon2) {
        return haversine({lat1, lon1}, {lat2, lon2});
      },
      py::arg("lat1"), py::arg("lon1"), py::arg("lat2"), py::arg("lon2"));
  m.def(
      "recall_at_n",
      [](const fs::path& results, const fs::path& manifest, double threshold_m, std::vector<std::size_t> ns) {
        EvalConfig cfg{threshold_m, std::move(ns)};
        return report_dict(recall_at_n(parse_results_jsonl(read_file(results)), load_manifest(manifest), cfg));
      },
      py::arg("results"), py::arg("manifest"), py::arg("threshold_m") = 25.0,
      py::arg("ns") = std::vector<std::size_t>{1, 5, 10});
  m.def(
      "alpha_lattice", [](double start, double stop, double step) { return alpha_lattice(start, stop, step); },
      py::arg("start") = 0.0, py::arg("stop") = 1.0, py::arg("step") = 0.1);

  // Fixture and CLI.
  m.def(
      "gen_fixture",
      [](const fs::path& out, std::uint64_t seed, std::size_t n_db, std::size_t n_queries) {
        return gen_fixture({seed, n_db, n_queries}, out).root;
      },
      py::arg("out"), py::arg("seed") = 7, py::arg("n_db") = 40, py::arg("n_queries") = 10);
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
