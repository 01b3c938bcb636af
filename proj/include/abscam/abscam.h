/*
 * C interface to the abscam library.
 *
 * Every object is an opaque handle created by an abscam_*_create / _load /
 * _clone / _explain call and released with the matching _destroy. Functions
 * return an abscam_status; on failure abscam_last_error() describes the
 * problem. Error text and warning records are kept per thread.
 *
 * A model handle must not be used from two threads at once; clone it per worker.
 * Images and maps are immutable once created and may be shared freely.
 */
#ifndef ABSCAM_H
#define ABSCAM_H

#include <stddef.h>
#include <stdint.h>

#if defined(ABSCAM_BUILDING_LIBRARY)
#define ABSCAM_API __attribute__((visibility("default")))
#else
#define ABSCAM_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum abscam_status {
    ABSCAM_OK = 0,
    ABSCAM_ERR_ARGUMENT = 1,
    ABSCAM_ERR_IO = 2,
    ABSCAM_ERR_ADAPTER = 3,
    ABSCAM_ERR_NUMERIC = 4,
    ABSCAM_ERR_PARSE = 5,
    ABSCAM_ERR_INTERNAL = 6
} abscam_status;

typedef struct abscam_model abscam_model;
typedef struct abscam_image abscam_image;
typedef struct abscam_map abscam_map;
typedef struct abscam_annotations abscam_annotations;
typedef struct abscam_sanity abscam_sanity;

ABSCAM_API const char* abscam_version(void);
ABSCAM_API const char* abscam_last_error(void);
ABSCAM_API const char* abscam_status_name(abscam_status status);

/* Warning records appended by the calling thread since the last clear. */
ABSCAM_API size_t abscam_warning_count(void);
ABSCAM_API const char* abscam_warning(size_t index);
ABSCAM_API void abscam_clear_warnings(void);

/* ---- models ------------------------------------------------------------- */

/* `spec` is either a built-in id ("reference-cnn", optionally "reference-cnn:<seed>")
 * or the path of a plain-text model profile. */
ABSCAM_API abscam_status abscam_model_load(const char* spec, abscam_model** out);
ABSCAM_API abscam_status abscam_model_create_reference(uint64_t seed, abscam_model** out);
ABSCAM_API abscam_status abscam_model_clone(const abscam_model* model, abscam_model** out);
ABSCAM_API void abscam_model_destroy(abscam_model* model);

ABSCAM_API const char* abscam_model_id(const abscam_model* model);
ABSCAM_API int abscam_model_num_classes(const abscam_model* model);
ABSCAM_API size_t abscam_model_layer_count(const abscam_model* model);
ABSCAM_API const char* abscam_model_layer_name(const abscam_model* model, size_t index);
ABSCAM_API const char* abscam_model_default_layer(const abscam_model* model);
ABSCAM_API void abscam_model_input_size(const abscam_model* model, int* height, int* width);
ABSCAM_API uint64_t abscam_model_checksum(const abscam_model* model);

/* mode: "cascade" or "independent". The input handle is left untouched. */
ABSCAM_API abscam_status abscam_model_randomize(const abscam_model* model, const char* mode, const char* layer,
                                                uint64_t seed, abscam_model** out);
ABSCAM_API abscam_status abscam_model_save_weights(const abscam_model* model, const char* path);

/* Softmax output; `probs` must hold abscam_model_num_classes() values. */
ABSCAM_API abscam_status abscam_model_predict(const abscam_model* model, const abscam_image* image, double* probs);
ABSCAM_API abscam_status abscam_predicted_class(const abscam_model* model, const abscam_image* image, int* out);

/* ---- images ------------------------------------------------------------- */

/* Decodes PNG/JPEG and resizes to height×width (bilinear). */
ABSCAM_API abscam_status abscam_image_load(const char* path, int height, int width, abscam_image** out);
/* Interleaved RGB samples in [0,1], row-major. */
ABSCAM_API abscam_status abscam_image_from_rgb(int height, int width, const double* rgb, abscam_image** out);
ABSCAM_API void abscam_image_destroy(abscam_image* image);
ABSCAM_API int abscam_image_height(const abscam_image* image);
ABSCAM_API int abscam_image_width(const abscam_image* image);
/* Size of the file before resizing (equals height/width for from_rgb images). */
ABSCAM_API int abscam_image_source_height(const abscam_image* image);
ABSCAM_API int abscam_image_source_width(const abscam_image* image);
ABSCAM_API const double* abscam_image_data(const abscam_image* image);
ABSCAM_API abscam_status abscam_image_save_png(const abscam_image* image, const char* path);

/* ---- saliency maps ------------------------------------------------------ */

typedef struct abscam_method_params {
    const char* method;  /* registry id, e.g. "abs-cam" */
    const char* layer;   /* NULL → the model's default target layer */
    int class_index;     /* -1 → predicted class */
    int workers;         /* rescoring threads for abs-cam / score-cam */
    int sg_samples;
    double sg_noise;
    uint64_t seed;
} abscam_method_params;

ABSCAM_API void abscam_method_params_init(abscam_method_params* params);

ABSCAM_API abscam_status abscam_explain(const abscam_model* model, const abscam_image* image,
                                        const abscam_method_params* params, abscam_map** out);
ABSCAM_API abscam_status abscam_map_create(int height, int width, const double* values, abscam_map** out);
ABSCAM_API void abscam_map_destroy(abscam_map* map);
ABSCAM_API int abscam_map_height(const abscam_map* map);
ABSCAM_API int abscam_map_width(const abscam_map* map);
ABSCAM_API int abscam_map_class(const abscam_map* map);
ABSCAM_API const char* abscam_map_method(const abscam_map* map);
ABSCAM_API const double* abscam_map_data(const abscam_map* map);
ABSCAM_API abscam_status abscam_map_argmax(const abscam_map* map, int* row, int* col);
ABSCAM_API abscam_status abscam_map_save_csv(const abscam_map* map, const char* path);
ABSCAM_API abscam_status abscam_map_save_binary(const abscam_map* map, const char* path);
ABSCAM_API abscam_status abscam_overlay(const abscam_image* image, const abscam_map* map, double alpha,
                                        abscam_image** out);

/* Custom methods. The callback fills `out` (height*width values, row-major) and
 * returns 0 on success. */
typedef struct abscam_method_context {
    const abscam_model* model;
    const abscam_image* image;
    const char* layer;
    int class_index;
    int height;
    int width;
} abscam_method_context;

typedef int (*abscam_method_fn)(const abscam_method_context* ctx, double* out, void* user);

ABSCAM_API abscam_status abscam_register_method(const char* id, abscam_method_fn fn, void* user);
ABSCAM_API int abscam_has_method(const char* id);
ABSCAM_API size_t abscam_method_count(void);
/* Writes the id of method `index` (sorted order) into buf, truncating to size-1 bytes. */
ABSCAM_API abscam_status abscam_method_id(size_t index, char* buf, size_t size);

/* ---- metrics ------------------------------------------------------------ */

typedef struct abscam_drop_case {
    double p_original;
    double p_masked;
    double drop;    /* fraction, max(0, p_orig - p_mask) / p_orig */
    int increased;
    int excluded;   /* p_orig == 0 */
} abscam_drop_case;

ABSCAM_API abscam_status abscam_drop_increase(const abscam_model* model, const abscam_image* image,
                                              const abscam_map* map, int class_index, double mask_fraction,
                                              abscam_drop_case* out);

/* `probs` may be NULL, otherwise it receives steps+1 values. baseline: "zeros" | "blur". */
ABSCAM_API abscam_status abscam_deletion_curve(const abscam_model* model, const abscam_image* image,
                                               const abscam_map* map, int class_index, int steps,
                                               const char* baseline, double sigma, double* probs, double* auc);
ABSCAM_API abscam_status abscam_insertion_curve(const abscam_model* model, const abscam_image* image,
                                                const abscam_map* map, int class_index, int steps, double sigma,
                                                double* probs, double* auc);

typedef struct abscam_bbox {
    const char* image_id;
    int class_label;
    int x0, y0, x1, y1;
} abscam_bbox;

ABSCAM_API abscam_status abscam_annotations_load(const char* path, abscam_annotations** out);
ABSCAM_API abscam_status abscam_annotations_parse(const char* text, abscam_annotations** out);
ABSCAM_API void abscam_annotations_destroy(abscam_annotations* annotations);
ABSCAM_API size_t abscam_annotations_count(const abscam_annotations* annotations);
ABSCAM_API abscam_status abscam_annotations_get(const abscam_annotations* annotations, size_t index,
                                                abscam_bbox* out);

/* Boxes are in source-image coordinates (source_height × source_width; 0 → map size). */
ABSCAM_API abscam_status abscam_pointing_hit(const abscam_map* map, const abscam_bbox* boxes, size_t count,
                                             int source_height, int source_width, int* hit);

ABSCAM_API abscam_status abscam_spearman(const abscam_map* a, const abscam_map* b, double* out);

ABSCAM_API abscam_status abscam_sanity_check(const abscam_model* model, const abscam_image* image,
                                             const abscam_method_params* params, const char* mode,
                                             const uint64_t* seeds, size_t seed_count, abscam_sanity** out);
ABSCAM_API void abscam_sanity_destroy(abscam_sanity* sanity);
ABSCAM_API size_t abscam_sanity_count(const abscam_sanity* sanity);
ABSCAM_API const char* abscam_sanity_layer(const abscam_sanity* sanity, size_t index);
ABSCAM_API double abscam_sanity_similarity(const abscam_sanity* sanity, size_t index);

#ifdef __cplusplus
}
#endif

#endif /* ABSCAM_H */
