#ifndef NAF_NAF_H
#define NAF_NAF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Neural affordance field library: fit multi-head implicit fields to
 * multi-view supervision, persist them in a weight bank, and transfer
 * manipulation trajectories to novel observations.
 *
 * All functions return naf_status; on failure naf_last_error() holds a
 * message for the calling thread.  Strings returned through char** are
 * heap-allocated and must be released with naf_string_free. */

typedef enum naf_status {
  NAF_OK = 0,
  NAF_ERR_CONFIG = 1,
  NAF_ERR_FIT_DIVERGENCE = 2,
  NAF_ERR_TRANSFER_FAILURE = 3,
  NAF_ERR_IO = 4,
  NAF_ERR_INVALID_ARGUMENT = 5,
  NAF_ERR_NUMERIC = 6,
  NAF_ERR_NOT_FOUND = 7,
  NAF_ERR_INTERNAL = 8
} naf_status;

typedef struct naf_model naf_model;
typedef struct naf_scene naf_scene;

const char* naf_version(void);
const char* naf_last_error(void);
void naf_string_free(char* s);

/* ---- scenes ---------------------------------------------------------- */

naf_status naf_scene_load(const char* path, naf_scene** out);
naf_status naf_scene_from_json(const char* json_text, naf_scene** out);
void naf_scene_free(naf_scene* s);
naf_status naf_scene_to_json(const naf_scene* s, char** out_json);
naf_status naf_scene_name(const naf_scene* s, char** out_name);

/* ---- model lifecycle -------------------------------------------------- */

/* config_json: full or partial field configuration (missing keys keep
 * defaults); NULL for all defaults.  Weights are freshly initialized from
 * the seed inside the configuration. */
naf_status naf_model_create(const char* config_json, naf_model** out);
void naf_model_free(naf_model* m);
naf_status naf_model_config_json(const naf_model* m, char** out_json);
int naf_model_has_dynamics(const naf_model* m);

/* ---- fitting ---------------------------------------------------------- */

/* Optimizes the static heads against oracle supervision rendered from the
 * scene.  trace_csv (optional) receives per-step loss breakdown rows. */
naf_status naf_fit_static(naf_model* m, const naf_scene* s,
                          const char* trace_csv);

/* Optimizes the action head against scripted point flows.  Requires the
 * scene motion horizon to match the model configuration. */
naf_status naf_fit_dynamic(naf_model* m, const naf_scene* s,
                           const char* trace_csv);

/* ---- queries ---------------------------------------------------------- */

/* pts: n rows of xyz (row-major, canonical frame); out: n signed distances. */
naf_status naf_query_sdf(const naf_model* m, const double* pts, int n,
                         double* out);

/* Renders an orbit view of the fitted field and writes a binary PPM. */
naf_status naf_render_view(const naf_model* m, int resolution,
                           double azimuth_deg, double elevation_deg,
                           double distance, double fov_deg,
                           const char* ppm_path);

/* Marching-cubes triangulation of the zero level set over the fitted
 * surface's bounding box; resolution = samples per axis (>= 3). */
naf_status naf_export_mesh(const naf_model* m, int resolution,
                           const char* ply_path);

/* ---- weight bank ------------------------------------------------------ */

naf_status naf_bank_save(const naf_model* m, const char* bank_dir,
                         const char* id, const char* narration);
naf_status naf_bank_load(const char* bank_dir, const char* id,
                         naf_model** out);
/* JSON array of manifest entries (id, narration, created, has_dynamics). */
naf_status naf_bank_list(const char* bank_dir, char** out_json);
/* Highest narration/descriptor similarity; desc may be NULL with n = 0. */
naf_status naf_bank_retrieve(const char* bank_dir, const char* narration,
                             const float* desc, int n, char** out_id);

/* ---- transfer --------------------------------------------------------- */

/* Runs the full transfer pipeline against a target observation described by
 * target_json (path to a JSON file; see docs/formats.md).  gripper_pose:
 * qw qx qy qz tx ty tz in the target frame, or NULL for a default hover pose
 * above the observed cloud.  options: filter / rank / optimization / fine
 * stage toggles, or NULL for all enabled.  Writes trajectory.csv,
 * trajectory.ply, overlay.ply and diagnostics.json into out_dir (optional);
 * returns a summary JSON. */
naf_status naf_transfer_run(const naf_model* m, const char* target_json,
                            const double* gripper_pose, const int* options,
                            int keyframes, const char* out_dir,
                            char** out_summary_json);

/* ---- evaluation ------------------------------------------------------- */

/* Runs perturbation sweeps described by suite_json (path; see
 * docs/formats.md), writing per-trial rows to trials_csv and per-scene
 * summary rows to summary_csv (either optional).  Trial failures are
 * counted, not fatal.  Returns a summary JSON. */
naf_status naf_eval_run(const char* suite_json, const char* trials_csv,
                        const char* summary_csv, char** out_summary_json);

#ifdef __cplusplus
}
#endif

#endif /* NAF_NAF_H */
