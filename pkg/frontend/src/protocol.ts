/**
 * Wire protocol mirror for the browser client.
 *
 * One JSON object per WebSocket text frame, keys in the order
 * v, kind, from, to, seq, ts, payload. Validation mirrors the relay's
 * decoder: malformed text, unknown kinds, unsupported versions and
 * out-of-range fields are distinguished so the UI can react sensibly.
 *
 * Sequence numbers are bounded at Number.MAX_SAFE_INTEGER here; the wire
 * format allows 64-bit values but a browser session never gets near that.
 */

export const PROTOCOL_VERSION = 1;
export const BROADCAST = "*";
export const SERVER_ID = "0000000000000000";
export const MAX_COMMAND_BYTES = 65536;
export const DEFAULT_CHUNK_SIZE = 16384;

export type Kind =
  | "hello"
  | "welcome"
  | "connect"
  | "connect_ok"
  | "peer_joined"
  | "peer_left"
  | "rotation"
  | "state"
  | "command"
  | "chat"
  | "file_manifest"
  | "file_chunk"
  | "file_ack"
  | "error";

export const KINDS: ReadonlySet<string> = new Set([
  "hello", "welcome", "connect", "connect_ok", "peer_joined", "peer_left",
  "rotation", "state", "command", "chat", "file_manifest", "file_chunk",
  "file_ack", "error",
]);

export const UPDATE_KINDS: ReadonlySet<string> = new Set(["rotation", "state", "command"]);

const ID_RE = /^[A-Za-z0-9]{16}$/;

export function isPeerId(value: unknown): value is string {
  return typeof value === "string" && ID_RE.test(value);
}

export function isAddress(value: unknown): value is string {
  return value === BROADCAST || isPeerId(value);
}

// ---------------------------------------------------------------- policy --

export interface Policy {
  send_rotations: boolean;
  send_states: boolean;
  send_commands: boolean;
  apply_rotations: boolean;
  apply_states: boolean;
  apply_commands: boolean;
}

export function defaultPolicy(): Policy {
  return {
    send_rotations: true,
    send_states: true,
    send_commands: true,
    apply_rotations: true,
    apply_states: true,
    apply_commands: true,
  };
}

export function gateOutbound(kind: string, p: Policy): boolean {
  if (kind === "rotation") return p.send_rotations;
  if (kind === "state") return p.send_states;
  if (kind === "command") return p.send_commands;
  return true;
}

export function gateInbound(kind: string, p: Policy): boolean {
  if (kind === "rotation") return p.apply_rotations;
  if (kind === "state") return p.apply_states;
  if (kind === "command") return p.apply_commands;
  return true;
}

// ------------------------------------------------------------ quaternions --

export type Quat = [number, number, number, number];

export const IDENTITY: Quat = [1, 0, 0, 0];
export const UNIT_TOL = 1e-9;
const GRID = 1e-9;

function norm2(q: Quat): number {
  return q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3];
}

export function isUnit(q: Quat, tol = UNIT_TOL): boolean {
  return Math.abs(norm2(q) - 1) <= tol;
}

function round9(x: number): number {
  return Math.round(x * 1e9) / 1e9;
}

/** Renormalize if needed and snap onto the 9-decimal wire grid. */
export function canonicalQuat(q: Quat): Quat {
  if (!q.every(Number.isFinite)) throw new Error(`non-finite quaternion ${q}`);
  let n2 = norm2(q);
  if (n2 === 0) throw new Error("zero quaternion");
  let out = q.slice() as Quat;
  if (Math.abs(n2 - 1) > UNIT_TOL) {
    const s = 1 / Math.sqrt(n2);
    out = [q[0] * s, q[1] * s, q[2] * s, q[3] * s];
  }
  out = out.map(round9) as Quat;
  const drift = norm2(out) - 1;
  if (Math.abs(drift) > UNIT_TOL) {
    // one grid step on the largest component lands back inside the band
    let i = 0;
    for (let k = 1; k < 4; k++) if (Math.abs(out[k]) > Math.abs(out[i])) i = k;
    const step = Math.sign(out[i]) * Math.sign(drift) * GRID;
    out[i] = round9(out[i] - step);
  }
  if (!isUnit(out)) throw new Error(`could not canonicalize quaternion ${q}`);
  return out;
}

/** Rotation applying q1 first, then q2 (Hamilton product q2*q1), normalized. */
export function composeRotation(q1: Quat, q2: Quat): Quat {
  if (!isUnit(q1) || !isUnit(q2)) throw new Error("non-unit quaternion");
  const [w2, x2, y2, z2] = q2;
  const [w1, x1, y1, z1] = q1;
  const out: Quat = [
    w2 * w1 - x2 * x1 - y2 * y1 - z2 * z1,
    w2 * x1 + x2 * w1 + y2 * z1 - z2 * y1,
    w2 * y1 - x2 * z1 + y2 * w1 + z2 * x1,
    w2 * z1 + x2 * y1 - y2 * x1 + z2 * w1,
  ];
  const s = 1 / Math.sqrt(norm2(out));
  return [out[0] * s, out[1] * s, out[2] * s, out[3] * s];
}

export function quatFromAxisAngle(axis: [number, number, number], rad: number): Quat {
  const [ax, ay, az] = axis;
  const n = Math.hypot(ax, ay, az);
  if (n === 0) throw new Error("zero rotation axis");
  const s = Math.sin(rad / 2) / n;
  return canonicalQuat([Math.cos(rad / 2), ax * s, ay * s, az * s]);
}

export function rotateVector(q: Quat, v: [number, number, number]): [number, number, number] {
  const [w, x, y, z] = q;
  const [vx, vy, vz] = v;
  // q * (0,v) * conj(q), expanded
  const tx = 2 * (y * vz - z * vy);
  const ty = 2 * (z * vx - x * vz);
  const tz = 2 * (x * vy - y * vx);
  return [
    vx + w * tx + y * tz - z * ty,
    vy + w * ty + z * tx - x * tz,
    vz + w * tz + x * ty - y * tx,
  ];
}

// -------------------------------------------------------------- envelopes --

export interface RotationPayload { q: Quat; hop: number }
export interface StatePayload { q: Quat; zoom: number; center: [number, number, number]; hop: number }
export interface CommandPayload { script: string; hop: number }
export interface ChatPayload { text: string }
export interface FileManifestPayload {
  file_id: string; name: string; total_bytes: number; chunk_size: number;
  chunk_count: number; digest: string;
}
export interface FileChunkPayload { file_id: string; index: number; data: string }
export interface FileAckPayload { file_id: string; ok: boolean; error: string }
export interface ErrorPayload { code: string; message: string }
export interface HelloPayload { policy: Policy }
export interface WelcomePayload { peer_id: string }
export interface ConnectPayload { target: string }
export interface PeerRefPayload { peer: string }

export type Payload =
  | RotationPayload | StatePayload | CommandPayload | ChatPayload
  | FileManifestPayload | FileChunkPayload | FileAckPayload | ErrorPayload
  | HelloPayload | WelcomePayload | ConnectPayload | PeerRefPayload;

export interface Envelope {
  kind: Kind;
  from: string;
  to: string;
  seq: number;
  ts: number;
  payload: Payload;
}

export type DecodeCode = "malformed" | "unknown_kind" | "unsupported_version" | "field_out_of_range";

export class DecodeError extends Error {
  constructor(public code: DecodeCode, message: string) {
    super(`${code}: ${message}`);
  }
}

function bad(message: string): never {
  throw new DecodeError("field_out_of_range", message);
}

function wantNumber(obj: Record<string, unknown>, key: string): number {
  const v = obj[key];
  if (typeof v !== "number" || !Number.isFinite(v)) bad(`bad type for ${key}`);
  return v;
}

function wantInt(obj: Record<string, unknown>, key: string, lo: number, hi: number): number {
  const v = wantNumber(obj, key);
  if (!Number.isInteger(v) || v < lo || v > hi) bad(`${key}=${v} out of range`);
  return v;
}

function wantString(obj: Record<string, unknown>, key: string): string {
  const v = obj[key];
  if (typeof v !== "string") bad(`bad type for ${key}`);
  return v;
}

function wantPeerId(obj: Record<string, unknown>, key: string): string {
  const v = wantString(obj, key);
  if (!isPeerId(v)) bad(`${key}=${v} is not a peer id`);
  return v;
}

function wantFloats(obj: Record<string, unknown>, key: string, n: number): number[] {
  const v = obj[key];
  if (!Array.isArray(v) || v.length !== n) bad(`${key} must be a list of ${n} numbers`);
  const out = v.map(Number);
  if (!out.every(Number.isFinite) || v.some((c) => typeof c !== "number")) {
    bad(`${key} has non-numeric entries`);
  }
  return out;
}

function wantHop(obj: Record<string, unknown>): number {
  return wantInt(obj, "hop", 0, 1);
}

function decodeQuat(obj: Record<string, unknown>): Quat {
  const q = wantFloats(obj, "q", 4) as Quat;
  try {
    return canonicalQuat(q);
  } catch (err) {
    bad(`q is degenerate: ${err}`);
  }
}

function decodePayload(kind: Kind, raw: unknown): Payload {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    bad("payload must be an object");
  }
  const obj = raw as Record<string, unknown>;
  switch (kind) {
    case "rotation":
      return { q: decodeQuat(obj), hop: wantHop(obj) };
    case "state": {
      const zoom = wantNumber(obj, "zoom");
      if (zoom <= 0) bad("zoom must be > 0");
      return {
        q: decodeQuat(obj),
        zoom,
        center: wantFloats(obj, "center", 3) as [number, number, number],
        hop: wantHop(obj),
      };
    }
    case "command": {
      const script = wantString(obj, "script");
      if (utf8Length(script) > MAX_COMMAND_BYTES) bad("command script too large");
      return { script, hop: wantHop(obj) };
    }
    case "chat":
      return { text: wantString(obj, "text") };
    case "file_manifest": {
      const total = wantInt(obj, "total_bytes", 0, Number.MAX_SAFE_INTEGER);
      const size = wantInt(obj, "chunk_size", 1, Number.MAX_SAFE_INTEGER);
      const count = wantInt(obj, "chunk_count", 0, Number.MAX_SAFE_INTEGER);
      if (count !== Math.ceil(total / size)) bad("chunk_count mismatch");
      const digest = wantString(obj, "digest");
      if (!/^[0-9a-f]{64}$/.test(digest)) bad("digest must be 64 hex chars");
      return {
        file_id: wantPeerId(obj, "file_id"),
        name: wantString(obj, "name"),
        total_bytes: total,
        chunk_size: size,
        chunk_count: count,
        digest,
      };
    }
    case "file_chunk": {
      const data = wantString(obj, "data");
      if (!/^[A-Za-z0-9+/]*={0,2}$/.test(data) || data.length % 4 !== 0) {
        bad("bad chunk data");
      }
      return {
        file_id: wantPeerId(obj, "file_id"),
        index: wantInt(obj, "index", 0, Number.MAX_SAFE_INTEGER),
        data,
      };
    }
    case "file_ack": {
      const ok = obj["ok"];
      if (typeof ok !== "boolean") bad("bad type for ok");
      return { file_id: wantPeerId(obj, "file_id"), ok, error: wantString(obj, "error") };
    }
    case "error":
      return { code: wantString(obj, "code"), message: wantString(obj, "message") };
    case "hello": {
      const p = obj["policy"];
      const policy = defaultPolicy();
      if (typeof p === "object" && p !== null) {
        for (const key of Object.keys(policy) as (keyof Policy)[]) {
          const v = (p as Record<string, unknown>)[key];
          if (v !== undefined) policy[key] = Boolean(v);
        }
      }
      return { policy };
    }
    case "welcome":
      return { peer_id: wantPeerId(obj, "peer_id") };
    case "connect":
      return { target: wantPeerId(obj, "target") };
    case "connect_ok":
    case "peer_joined":
    case "peer_left":
      return { peer: wantPeerId(obj, "peer") };
  }
}

export function decodeEnvelope(text: string): Envelope {
  let obj: unknown;
  try {
    obj = JSON.parse(text);
  } catch (err) {
    throw new DecodeError("malformed", `not JSON: ${err}`);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new DecodeError("malformed", "top level must be an object");
  }
  const o = obj as Record<string, unknown>;
  const version = o["v"];
  if (typeof version !== "number" || !Number.isInteger(version)) {
    throw new DecodeError("malformed", "missing or non-integer version");
  }
  if (version !== PROTOCOL_VERSION) {
    throw new DecodeError("unsupported_version", `version ${version} not supported`);
  }
  const kind = o["kind"];
  if (typeof kind !== "string") throw new DecodeError("malformed", "missing kind");
  if (!KINDS.has(kind)) throw new DecodeError("unknown_kind", `unknown kind ${kind}`);

  const from = wantString(o, "from");
  if (!isPeerId(from)) bad(`from=${from} is not a peer id`);
  const to = wantString(o, "to");
  if (!isAddress(to)) bad(`to=${to} is not a peer id or '*'`);
  const seq = wantInt(o, "seq", 0, Number.MAX_SAFE_INTEGER);
  const ts = wantInt(o, "ts", -Number.MAX_SAFE_INTEGER, Number.MAX_SAFE_INTEGER);
  if (!("payload" in o)) bad("missing payload");
  const payload = decodePayload(kind as Kind, o["payload"]);
  return { kind: kind as Kind, from, to, seq, ts, payload };
}

export function encodeEnvelope(e: Envelope): string {
  // object literal order fixes the key order in the output
  return JSON.stringify({
    v: PROTOCOL_VERSION,
    kind: e.kind,
    from: e.from,
    to: e.to,
    seq: e.seq,
    ts: e.ts,
    payload: e.payload,
  });
}

export function utf8Length(text: string): number {
  return new TextEncoder().encode(text).length;
}

// ------------------------------------------------------------ viewer model --

export interface ViewerModel {
  orientation: Quat;
  zoom: number;
  center: [number, number, number];
  lastAppliedSeq: Map<string, number>;
  commandLog: string[];
}

export function freshModel(): ViewerModel {
  return {
    orientation: [...IDENTITY] as Quat,
    zoom: 100,
    center: [0, 0, 0],
    lastAppliedSeq: new Map(),
    commandLog: [],
  };
}

/**
 * Apply a rotation/state/command envelope under last-writer-wins per
 * sender. Mutates and returns whether anything changed.
 */
export function applyUpdate(model: ViewerModel, e: Envelope, policy: Policy): boolean {
  if (!UPDATE_KINDS.has(e.kind)) return false;
  if (!gateInbound(e.kind, policy)) return false;
  const last = model.lastAppliedSeq.get(e.from) ?? 0;
  if (e.seq <= last) return false;
  model.lastAppliedSeq.set(e.from, e.seq);
  if (e.kind === "rotation") {
    model.orientation = (e.payload as RotationPayload).q;
  } else if (e.kind === "state") {
    const p = e.payload as StatePayload;
    model.orientation = p.q;
    model.zoom = p.zoom;
    model.center = p.center;
  } else {
    model.commandLog.push((e.payload as CommandPayload).script);
  }
  return true;
}

// --------------------------------------------------------------- coalescer --

/** Keep only the newest pending camera snapshot; emit at most once per interval. */
export class Coalescer<T> {
  private lastEmitMs: number | null = null;
  private pending: T | null = null;

  constructor(public readonly maxRateHz = 20) {}

  get intervalMs(): number {
    return 1000 / this.maxRateHz;
  }

  offer(item: T, nowMs: number): T | null {
    this.pending = item;
    return this.poll(nowMs);
  }

  poll(nowMs: number): T | null {
    if (this.pending === null) return null;
    if (this.lastEmitMs !== null && nowMs - this.lastEmitMs < this.intervalMs) {
      return null;
    }
    const out = this.pending;
    this.pending = null;
    this.lastEmitMs = nowMs;
    return out;
  }

  nextDeadlineMs(): number | null {
    if (this.pending === null) return null;
    if (this.lastEmitMs === null) return 0;
    return this.lastEmitMs + Math.ceil(this.intervalMs);
  }
}

// ------------------------------------------------------------ file transfer --

export function bytesToBase64(data: Uint8Array): string {
  let binary = "";
  for (let i = 0; i < data.length; i++) binary += String.fromCharCode(data[i]);
  return btoa(binary);
}

export function base64ToBytes(text: string): Uint8Array {
  const binary = atob(text);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}

export async function sha256Hex(data: Uint8Array): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", data as BufferSource);
  return Array.from(new Uint8Array(digest), (b) => b.toString(16).padStart(2, "0")).join("");
}

export interface ChunkedFile {
  manifest: FileManifestPayload;
  chunks: FileChunkPayload[];
}

export function randomToken(): string {
  const alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
  let out = "";
  const values = new Uint32Array(16);
  crypto.getRandomValues(values);
  for (const v of values) out += alphabet[v % alphabet.length];
  return out;
}

export async function chunkFile(
  name: string, data: Uint8Array, chunkSize = DEFAULT_CHUNK_SIZE
): Promise<ChunkedFile> {
  if (chunkSize < 1) throw new Error("chunk_size must be >= 1");
  const fileId = randomToken();
  const count = Math.ceil(data.length / chunkSize);
  const manifest: FileManifestPayload = {
    file_id: fileId,
    name,
    total_bytes: data.length,
    chunk_size: chunkSize,
    chunk_count: count,
    digest: await sha256Hex(data),
  };
  const chunks: FileChunkPayload[] = [];
  for (let i = 0; i < count; i++) {
    chunks.push({
      file_id: fileId,
      index: i,
      data: bytesToBase64(data.subarray(i * chunkSize, (i + 1) * chunkSize)),
    });
  }
  return { manifest, chunks };
}

export type FileErrorCode = "missing_chunks" | "digest_mismatch" | "unknown_file_id";

export class FileError extends Error {
  constructor(public code: FileErrorCode, message: string, public missing: number[] = []) {
    super(`${code}: ${message}`);
  }
}

export class Reassembly {
  private parts = new Map<number, Uint8Array>();

  constructor(public readonly manifest: FileManifestPayload) {}

  add(chunk: FileChunkPayload): void {
    if (chunk.file_id !== this.manifest.file_id) {
      throw new FileError("unknown_file_id", `chunk for ${chunk.file_id}`);
    }
    if (chunk.index >= this.manifest.chunk_count) {
      throw new FileError("unknown_file_id", `chunk index ${chunk.index} out of range`);
    }
    if (!this.parts.has(chunk.index)) {
      this.parts.set(chunk.index, base64ToBytes(chunk.data));
    }
  }

  get receivedCount(): number {
    return this.parts.size;
  }

  get complete(): boolean {
    return this.parts.size === this.manifest.chunk_count;
  }

  missing(): number[] {
    const out: number[] = [];
    for (let i = 0; i < this.manifest.chunk_count; i++) {
      if (!this.parts.has(i)) out.push(i);
    }
    return out;
  }

  async finish(): Promise<Uint8Array> {
    const gaps = this.missing();
    if (gaps.length > 0) {
      throw new FileError("missing_chunks", `missing chunk indices ${gaps}`, gaps);
    }
    const total = Array.from(this.parts.values()).reduce((n, p) => n + p.length, 0);
    const out = new Uint8Array(total);
    let offset = 0;
    for (let i = 0; i < this.manifest.chunk_count; i++) {
      const part = this.parts.get(i)!;
      out.set(part, offset);
      offset += part.length;
    }
    if (out.length !== this.manifest.total_bytes) {
      throw new FileError("digest_mismatch", "size does not match manifest");
    }
    if ((await sha256Hex(out)) !== this.manifest.digest) {
      throw new FileError("digest_mismatch", "content hash does not match manifest digest");
    }
    return out;
  }
}
