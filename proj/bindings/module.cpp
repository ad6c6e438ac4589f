#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "randsac/mask.hpp"
#include "randsac/segmenter.hpp"
#include "randsac/serializer.hpp"
#include "randsac/tokenizer.hpp"

namespace py = pybind11;
using namespace randsac;

namespace {

Image image_from_array(py::array_t<float, py::array::c_style | py::array::forcecast> arr) {
    if (arr.ndim() != 3) throw py::value_error("image must have shape (h, w, c)");
    Image img;
    img.h = static_cast<int>(arr.shape(0));
    img.w = static_cast<int>(arr.shape(1));
    img.c = static_cast<int>(arr.shape(2));
    img.pix.assign(arr.data(), arr.data() + arr.size());
    return img;
}

py::array_t<float> array_from_tensor(const Tensor<float>& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<float> out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

py::array_t<std::uint8_t> array_from_mask(const AttentionMask& m) {
    py::array_t<std::uint8_t> out({m.n, m.n});
    std::copy(m.allow.begin(), m.allow.end(), out.mutable_data());
    return out;
}

SegmentMap map_from_vec(const std::vector<int>& assignment) {
    SegmentMap map;
    map.assignment = assignment;
    map.num_segments = assignment.empty() ? 0 : *std::max_element(assignment.begin(), assignment.end()) + 1;
    map.validate();
    return map;
}

SerializationOrder order_from_groups(const std::vector<std::vector<int>>& groups, int num_segments) {
    SerializationOrder order;
    order.groups = groups;
    order.validate(num_segments);
    return order;
}

}  // namespace

PYBIND11_MODULE(_randsac, m) {
    m.doc() = "Core RandSAC operations: tokenization, segmentation, serialization, masks";

    m.def(
        "patchify",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> img, int patch) {
            TokenGrid grid = patchify(image_from_array(img), patch);
            return py::make_tuple(array_from_tensor(grid.tokens), grid.grid_h, grid.grid_w);
        },
        py::arg("image"), py::arg("patch"),
        "Split an (h, w, c) float image into P*P*c token rows; returns (tokens, grid_h, grid_w).");

    m.def(
        "sincos_positions", [](int grid_h, int grid_w, int dim) { return array_from_tensor(sincos_positions(grid_h, grid_w, dim)); },
        py::arg("grid_h"), py::arg("grid_w"), py::arg("dim"));

    m.def(
        "token_coordinates",
        [](int grid_h, int grid_w) {
            auto coords = token_coordinates(grid_h, grid_w);
            py::array_t<double> out({static_cast<py::ssize_t>(coords.size()), static_cast<py::ssize_t>(2)});
            auto* p = out.mutable_data();
            for (std::size_t i = 0; i < coords.size(); ++i) {
                p[2 * i] = coords[i].x;
                p[2 * i + 1] = coords[i].y;
            }
            return out;
        },
        py::arg("grid_h"), py::arg("grid_w"), "Token centers in the [-2, 2]^2 frame, row-major, as (N, 2).");

    m.def(
        "square_partition",
        [](int grid_h, int grid_w, int m_) {
            SegmentMap map = square_partition(grid_h, grid_w, m_);
            return py::make_tuple(map.assignment, map.num_segments);
        },
        py::arg("grid_h"), py::arg("grid_w"), py::arg("m"));

    m.def(
        "blob_partition",
        [](int grid_h, int grid_w, int k, std::uint64_t seed, bool strict) {
            Rng rng(seed);
            SegmentMap map = sample_blob_partition(rng, k, token_coordinates(grid_h, grid_w), strict);
            return py::make_tuple(map.assignment, map.num_segments);
        },
        py::arg("grid_h"), py::arg("grid_w"), py::arg("k"), py::arg("seed"), py::arg("strict") = false,
        "Gaussian-blob token partition; returns (assignment, realized_k).");

    m.def(
        "random_flat_order",
        [](int num_segments, std::uint64_t seed) {
            Rng rng(seed);
            return random_flat_order(rng, num_segments).groups;
        },
        py::arg("num_segments"), py::arg("seed"));

    m.def(
        "hierarchical_order",
        [](const std::vector<int>& assignment, int grid_h, int grid_w, const std::vector<int>& level_counts,
           std::uint64_t seed) {
            Rng rng(seed);
            SegmentMap map = map_from_vec(assignment);
            return hierarchical_order(rng, map, token_coordinates(grid_h, grid_w), level_counts).groups;
        },
        py::arg("assignment"), py::arg("grid_h"), py::arg("grid_w"), py::arg("level_counts"), py::arg("seed"));

    m.def(
        "source_mask",
        [](const std::vector<int>& assignment, const std::vector<std::vector<int>>& groups) {
            SegmentMap map = map_from_vec(assignment);
            return array_from_mask(build_source_mask(map, order_from_groups(groups, map.num_segments)));
        },
        py::arg("assignment"), py::arg("groups"));

    m.def(
        "memory_mask",
        [](const std::vector<int>& assignment, const std::vector<std::vector<int>>& groups) {
            SegmentMap map = map_from_vec(assignment);
            return array_from_mask(build_memory_mask(map, order_from_groups(groups, map.num_segments)));
        },
        py::arg("assignment"), py::arg("groups"));

    m.def(
        "decoder_self_mask",
        [](const std::vector<int>& assignment, const std::vector<std::vector<int>>& groups) {
            SegmentMap map = map_from_vec(assignment);
            return array_from_mask(build_decoder_self_mask(map, order_from_groups(groups, map.num_segments)));
        },
        py::arg("assignment"), py::arg("groups"));
}
