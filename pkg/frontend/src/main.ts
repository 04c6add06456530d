// Wiring: character/motion pickers, timeline, per-limb slider groups with a
// master scale, debounced rebalancing, camera toggle.

import { RebalanceResponse, ServiceClient } from "./api.js";
import { DebouncedScheduler } from "./debounce.js";
import { Camera, defaultCamera, renderFrame } from "./render.js";
import { ViewerSession } from "./session.js";

const LIMB_GROUPS: [string, (name: string) => boolean][] = [
  ["left arm", (n) => n.includes("Left") && (n.includes("Arm") || n.includes("Hand"))],
  ["right arm", (n) => n.includes("Right") && (n.includes("Arm") || n.includes("Hand"))],
  ["left leg", (n) => n.includes("Left") && (n.includes("Leg") || n.includes("Foot") || n.includes("Toe"))],
  ["right leg", (n) => n.includes("Right") && (n.includes("Leg") || n.includes("Foot") || n.includes("Toe"))],
  ["body", () => true], // catches the rest
];

const client = new ServiceClient("");
const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const camera: Camera = defaultCamera();

let session: ViewerSession | null = null;
let mesh: Awaited<ReturnType<ServiceClient["mesh"]>> | null = null;
let scheduler: DebouncedScheduler<ReturnType<ViewerSession["rebalanceBody"]>, RebalanceResponse> | null = null;
let playing = false;

function toast(message: string): void {
  const el = document.getElementById("toast")!;
  el.textContent = message;
  el.classList.add("visible");
  setTimeout(() => el.classList.remove("visible"), 3000);
}

function draw(): void {
  if (!session) return;
  renderFrame(ctx, session.currentFrame(), session.parents, mesh, camera);
  (document.getElementById("frame-label") as HTMLElement).textContent =
    `frame ${session.cursor + 1}/${session.nFrames}`;
}

function spinner(on: boolean): void {
  document.getElementById("spinner")!.style.visibility = on ? "visible" : "hidden";
}

function buildSliders(): void {
  if (!session) return;
  const holder = document.getElementById("sliders")!;
  holder.innerHTML = "";
  const assigned = new Set<number>();

  const master = document.createElement("div");
  master.className = "group";
  master.innerHTML = `<h3>master scale</h3>`;
  const masterInput = document.createElement("input");
  masterInput.type = "range";
  masterInput.min = "0";
  masterInput.max = "2";
  masterInput.step = "0.01";
  masterInput.value = String(session.sliders.scale);
  masterInput.addEventListener("input", () => {
    session!.setScale(parseFloat(masterInput.value));
    holder.querySelectorAll<HTMLInputElement>("input[data-joint]").forEach((el) => {
      const w = session!.currentFrame().w_network[parseInt(el.dataset.joint!, 10)];
      el.value = String(Math.min(1, w * parseFloat(masterInput.value)));
    });
    scheduler!.request(session!.rebalanceBody());
  });
  master.appendChild(masterInput);
  holder.appendChild(master);

  for (const [label, match] of LIMB_GROUPS) {
    const joints = session.jointNames
      .map((name, index) => ({ name, index }))
      .filter(({ name, index }) => !assigned.has(index) && match(name));
    joints.forEach(({ index }) => assigned.add(index));
    if (!joints.length) continue;
    const group = document.createElement("div");
    group.className = "group";
    group.innerHTML = `<h3>${label}</h3>`;
    for (const { name, index } of joints) {
      const row = document.createElement("label");
      row.textContent = name;
      const input = document.createElement("input");
      input.type = "range";
      input.min = "0";
      input.max = "1";
      input.step = "0.01";
      input.dataset.joint = String(index);
      input.value = String(session.sliders.perJoint[index] ?? 0.5);
      input.addEventListener("input", () => {
        session!.setJointWeight(index, parseFloat(input.value));
        scheduler!.request(session!.rebalanceBody());
      });
      row.appendChild(input);
      group.appendChild(row);
    }
    holder.appendChild(group);
  }
}

async function loadSequence(): Promise<void> {
  const src = (document.getElementById("src") as HTMLSelectElement).value;
  const tgt = (document.getElementById("tgt") as HTMLSelectElement).value;
  const motion = (document.getElementById("motion") as HTMLSelectElement).value;
  spinner(true);
  try {
    const [sequence, meshResponse] = await Promise.all([
      client.sequence(src, tgt, motion),
      client.mesh(tgt),
    ]);
    session = new ViewerSession(sequence);
    mesh = meshResponse;
    const timeline = document.getElementById("timeline") as HTMLInputElement;
    timeline.max = String(session.nFrames - 1);
    timeline.value = "0";
    session.setCursor(0);
    const previousState = session.sliders;
    scheduler = new DebouncedScheduler(
      (body, _seq) => client.rebalance(body),
      (result, seq) => {
        if (session!.applyResponse(seq, result.frames)) draw();
        spinner(false);
      },
      (error, _seq) => {
        spinner(false);
        // roll the sliders back to the last acknowledged pose
        session!.sliders = previousState;
        buildSliders();
        toast(`rebalance failed: ${error instanceof Error ? error.message : error}`);
      },
    );
    buildSliders();
    draw();
  } catch (error) {
    toast(String(error));
  } finally {
    spinner(false);
  }
}

async function boot(): Promise<void> {
  const listing = await client.characters();
  for (const [id, values] of [
    ["src", listing.characters.map((c) => c.name)],
    ["tgt", listing.characters.map((c) => c.name)],
    ["motion", listing.motions],
  ] as [string, string[]][]) {
    const select = document.getElementById(id) as HTMLSelectElement;
    select.innerHTML = "";
    for (const value of values) {
      const option = document.createElement("option");
      option.value = option.textContent = value;
      select.appendChild(option);
    }
    select.addEventListener("change", loadSequence);
  }
  (document.getElementById("tgt") as HTMLSelectElement).selectedIndex = Math.min(
    1,
    listing.characters.length - 1,
  );

  (document.getElementById("timeline") as HTMLInputElement).addEventListener("input", (event) => {
    if (!session) return;
    session.setCursor(parseInt((event.target as HTMLInputElement).value, 10));
    draw();
  });
  document.getElementById("camera-toggle")!.addEventListener("click", () => {
    camera.perspective = !camera.perspective;
    (document.getElementById("camera-toggle") as HTMLElement).textContent = camera.perspective
      ? "perspective"
      : "orthographic";
    draw();
  });
  document.getElementById("play")!.addEventListener("click", () => {
    playing = !playing;
    (document.getElementById("play") as HTMLElement).textContent = playing ? "pause" : "play";
  });
  canvas.addEventListener("mousemove", (event) => {
    if (event.buttons !== 1) return;
    camera.yaw += event.movementX * 0.01;
    camera.pitch = Math.max(-1.2, Math.min(1.2, camera.pitch + event.movementY * 0.01));
    draw();
  });
  setInterval(() => {
    if (!playing || !session) return;
    const timeline = document.getElementById("timeline") as HTMLInputElement;
    const next = (session.cursor + 1) % session.nFrames;
    timeline.value = String(next);
    session.setCursor(next);
    draw();
  }, 1000 / 24);

  await loadSequence();
}

boot().catch((error) => toast(String(error)));
