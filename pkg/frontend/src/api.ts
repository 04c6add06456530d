// Typed client for the retargeting service. The viewer never computes
// retargeting math itself: every pose it shows came from one of these calls.

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];

export interface FramePayload {
  frame: number;
  root: { velocity: Vec3; yaw: number };
  q_cp: Quat[];
  q_sem: Quat[];
  q_geo: Quat[];
  w_network: number[];
  w: number[];
  q_out: Quat[];
  positions_src: Vec3[];
  positions_out: Vec3[];
  vertices_out: Vec3[];
  penetrating: number[];
}

export interface CharacterInfo {
  name: string;
  joints: number;
  height: number;
}

export interface CharactersResponse {
  snapshot: string;
  characters: CharacterInfo[];
  motions: string[];
}

export interface SequenceResponse {
  snapshot: string;
  src: string;
  tgt: string;
  motion: string;
  fps: number;
  joint_names: string[];
  parents: number[];
  n_frames: number;
  frames: FramePayload[];
}

export interface MeshResponse {
  snapshot: string;
  character: string;
  vertices: Vec3[];
  triangles: [number, number, number][];
  part_labels: string[];
  limb_sets: Record<string, number[]>;
  hand_set: number[];
}

export interface RebalanceRequest {
  src: string;
  tgt: string;
  motion: string;
  snapshot?: string;
  w_override?: number[];
  w_scale?: number;
  frame_range?: [number, number];
}

export interface RebalanceResponse {
  snapshot: string;
  frames: FramePayload[];
}

async function getJson<T>(url: string): Promise<T> {
  const response = await fetch(url);
  if (!response.ok) {
    throw new Error(`${url}: ${response.status} ${await response.text()}`);
  }
  return (await response.json()) as T;
}

export class ServiceClient {
  constructor(private base: string = "") {}

  characters(): Promise<CharactersResponse> {
    return getJson(`${this.base}/characters`);
  }

  sequence(src: string, tgt: string, motion: string): Promise<SequenceResponse> {
    const params = new URLSearchParams({ src, tgt, motion });
    return getJson(`${this.base}/sequence?${params}`);
  }

  mesh(character: string): Promise<MeshResponse> {
    return getJson(`${this.base}/mesh?${new URLSearchParams({ character })}`);
  }

  async rebalance(body: RebalanceRequest): Promise<RebalanceResponse> {
    const response = await fetch(`${this.base}/rebalance`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      let reason = `${response.status}`;
      try {
        const detail = (await response.json()) as { detail?: string };
        if (detail.detail) reason = detail.detail;
      } catch {
        /* keep the status code */
      }
      throw new Error(reason);
    }
    return (await response.json()) as RebalanceResponse;
  }
}
