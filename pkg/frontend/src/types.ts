/** JSON shapes of the service wire contract. */

export type Bbox = [number, number, number, number];

export interface ObjectNodeDoc {
  id: string;
  category: string;
  attributes: Record<string, string>;
  bbox: Bbox;
}

export interface RelationshipDoc {
  subject: string;
  predicate: string;
  object: string;
}

export interface SceneGraphDoc {
  schema_version: 1;
  image: string;
  width: number;
  height: number;
  objects: ObjectNodeDoc[];
  relationships: RelationshipDoc[];
}

export type EditKind = 'remove' | 'add' | 'replace' | 'relationship_change';

export interface EditOpDoc {
  schema_version: 1;
  kind: EditKind;
  target_id?: string;
  new_node?: ObjectNodeDoc;
  new_edges?: RelationshipDoc[];
  edge_change?: { old: RelationshipDoc; new: RelationshipDoc };
  object_source?: { image: string; bbox: Bbox };
}

export interface SessionState {
  id: string;
  image_ref: string;
  graph: SceneGraphDoc;
  pixel_graph: SceneGraphDoc;
  pending_ops: EditOpDoc[];
  history_length: number;
  predicates: string[];
  image_png_base64: string;
}

export interface JobProgress {
  step_index?: number | null;
  step_name?: string | null;
  iteration?: number | null;
  loss?: number | null;
}

export type JobStatus = 'queued' | 'running' | 'failed' | 'done';

export interface JobDoc {
  id: string;
  session_id: string;
  status: JobStatus;
  progress: JobProgress | null;
  error: string | null;
}

export interface RoiDoc {
  bbox: Bbox;
  derivation: string;
}

export interface MetricsDoc {
  mae_all: number;
  ssim_all: number;
  mae_roi: number;
  ssim_roi: number;
  resolution: number;
  roi: RoiDoc;
}

export interface JobResultDoc {
  job_id: string;
  metrics: MetricsDoc | null;
  artifacts: string[];
  fallbacks: string[];
  result_png_base64: string;
}
