// Viewer session state: the frame cache, the balancing sliders, and the
// last-write-wins reconciliation of /rebalance responses. Displayed frames
// are always the last acknowledged service payloads - scrubbing is a pure
// cache lookup and never triggers recomputation.

import type { FramePayload, SequenceResponse } from "./api.js";

export interface SliderState {
  perJoint: number[]; // in [0, 1]
  scale: number; // >= 0
  useOverride: boolean; // true: per-joint sliders, false: master scale
}

export class ViewerSession {
  readonly snapshot: string;
  readonly src: string;
  readonly tgt: string;
  readonly motion: string;
  readonly fps: number;
  readonly jointNames: string[];
  readonly parents: number[];
  readonly nFrames: number;

  private frames: FramePayload[];
  private cursorIndex = 0;
  sliders: SliderState;

  private nextSeq = 0;
  private ackedSeq = -1;

  constructor(sequence: SequenceResponse) {
    this.snapshot = sequence.snapshot;
    this.src = sequence.src;
    this.tgt = sequence.tgt;
    this.motion = sequence.motion;
    this.fps = sequence.fps;
    this.jointNames = sequence.joint_names;
    this.parents = sequence.parents;
    this.nFrames = sequence.n_frames;
    this.frames = sequence.frames.slice();
    this.sliders = {
      perJoint: sequence.frames.length ? sequence.frames[0].w.slice() : [],
      scale: 1.0,
      useOverride: false,
    };
  }

  get cursor(): number {
    return this.cursorIndex;
  }

  setCursor(index: number): FramePayload {
    this.cursorIndex = Math.min(Math.max(0, Math.round(index)), this.nFrames - 1);
    return this.frames[this.cursorIndex];
  }

  currentFrame(): FramePayload {
    return this.frames[this.cursorIndex];
  }

  frameAt(index: number): FramePayload | undefined {
    return this.frames[index];
  }

  setJointWeight(joint: number, value: number): void {
    if (value < 0 || value > 1) throw new RangeError(`w must be in [0,1], got ${value}`);
    this.sliders.perJoint[joint] = value;
    this.sliders.useOverride = true;
  }

  setScale(value: number): void {
    if (value < 0) throw new RangeError(`scale must be >= 0, got ${value}`);
    this.sliders.scale = value;
    this.sliders.useOverride = false;
  }

  /** Request body for the current slider state. */
  rebalanceBody() {
    const base = { src: this.src, tgt: this.tgt, motion: this.motion, snapshot: this.snapshot };
    return this.sliders.useOverride
      ? { ...base, w_override: this.sliders.perJoint.slice() }
      : { ...base, w_scale: this.sliders.scale };
  }

  issueSeq(): number {
    return this.nextSeq++;
  }

  /**
   * Apply an acknowledged /rebalance response. Stale responses (an older
   * sequence number than one already applied) are dropped, so the displayed
   * pose always corresponds to the newest acknowledged request.
   */
  applyResponse(seq: number, frames: FramePayload[]): boolean {
    if (seq <= this.ackedSeq) return false;
    this.ackedSeq = seq;
    for (const frame of frames) {
      this.frames[frame.frame] = frame;
    }
    return true;
  }

  get acknowledged(): number {
    return this.ackedSeq;
  }
}
