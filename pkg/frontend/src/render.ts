// Canvas renderer: source and result skeletons side by side, result mesh as
// a wireframe, penetrating vertices highlighted. Pure projection of
// service-provided positions; no pose math happens here.

import type { FramePayload, MeshResponse, Vec3 } from "./api.js";

export interface Camera {
  yaw: number; // radians about the vertical axis
  pitch: number;
  distance: number;
  perspective: boolean;
}

export const defaultCamera = (): Camera => ({
  yaw: 0.5,
  pitch: 0.15,
  distance: 4.0,
  perspective: true,
});

export function project(
  point: Vec3,
  camera: Camera,
  width: number,
  height: number,
  offsetX: number,
): [number, number] {
  const [x0, y0, z0] = point;
  const cy = Math.cos(camera.yaw);
  const sy = Math.sin(camera.yaw);
  const x1 = cy * x0 + sy * z0;
  const z1 = -sy * x0 + cy * z0;
  const cp = Math.cos(camera.pitch);
  const sp = Math.sin(camera.pitch);
  const y2 = cp * y0 - sp * z1;
  const z2 = sp * y0 + cp * z1;
  const scale = camera.perspective
    ? (0.9 * height) / (camera.distance + z2 + 2.0)
    : 0.33 * height;
  return [offsetX + x1 * scale, height * 0.62 - y2 * scale];
}

function drawSkeleton(
  ctx: CanvasRenderingContext2D,
  positions: Vec3[],
  parents: number[],
  camera: Camera,
  offsetX: number,
  color: string,
) {
  const { width, height } = ctx.canvas;
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.lineWidth = 2;
  for (let j = 0; j < positions.length; j++) {
    const p = parents[j];
    const [x, y] = project(positions[j], camera, width, height, offsetX);
    ctx.beginPath();
    ctx.arc(x, y, 2.5, 0, 2 * Math.PI);
    ctx.fill();
    if (p >= 0) {
      const [px, py] = project(positions[p], camera, width, height, offsetX);
      ctx.beginPath();
      ctx.moveTo(px, py);
      ctx.lineTo(x, y);
      ctx.stroke();
    }
  }
}

function drawWireframe(
  ctx: CanvasRenderingContext2D,
  vertices: Vec3[],
  triangles: [number, number, number][],
  camera: Camera,
  offsetX: number,
) {
  const { width, height } = ctx.canvas;
  ctx.strokeStyle = "rgba(110, 140, 170, 0.35)";
  ctx.lineWidth = 0.6;
  ctx.beginPath();
  for (const [a, b, c] of triangles) {
    const pa = project(vertices[a], camera, width, height, offsetX);
    const pb = project(vertices[b], camera, width, height, offsetX);
    const pc = project(vertices[c], camera, width, height, offsetX);
    ctx.moveTo(pa[0], pa[1]);
    ctx.lineTo(pb[0], pb[1]);
    ctx.lineTo(pc[0], pc[1]);
    ctx.lineTo(pa[0], pa[1]);
  }
  ctx.stroke();
}

export function renderFrame(
  ctx: CanvasRenderingContext2D,
  frame: FramePayload,
  parents: number[],
  mesh: MeshResponse | null,
  camera: Camera,
): void {
  const { width, height } = ctx.canvas;
  ctx.clearRect(0, 0, width, height);
  drawSkeleton(ctx, frame.positions_src, parents, camera, width * 0.27, "#8fd18f");
  drawSkeleton(ctx, frame.positions_out, parents, camera, width * 0.72, "#88b7e8");
  if (mesh) {
    drawWireframe(ctx, frame.vertices_out, mesh.triangles, camera, width * 0.72);
    ctx.fillStyle = "#ff5252";
    for (const index of frame.penetrating) {
      const [x, y] = project(frame.vertices_out[index], camera, width, height, width * 0.72);
      ctx.beginPath();
      ctx.arc(x, y, 2.2, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
  ctx.fillStyle = "#ccc";
  ctx.font = "12px sans-serif";
  ctx.fillText("source", width * 0.25, 16);
  ctx.fillText(`result (${frame.penetrating.length} penetrating)`, width * 0.66, 16);
}
