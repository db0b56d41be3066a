/**
 * Browser session state machine, kept free of DOM and WebSocket concerns so
 * it can be tested headlessly. The UI layer feeds it wire text and user
 * actions; it returns the frames to send and notifies listeners of state
 * changes. Incoming files are held until the user explicitly accepts them,
 * unlike the headless peer which auto-accepts.
 */

import {
  applyUpdate,
  BROADCAST,
  canonicalQuat,
  Coalescer,
  CommandPayload,
  chunkFile,
  ChatPayload,
  decodeEnvelope,
  DecodeError,
  defaultPolicy,
  Envelope,
  ErrorPayload,
  encodeEnvelope,
  FileAckPayload,
  FileChunkPayload,
  FileManifestPayload,
  freshModel,
  gateOutbound,
  isPeerId,
  MAX_COMMAND_BYTES,
  Policy,
  Quat,
  Reassembly,
  RotationPayload,
  SERVER_ID,
  StatePayload,
  utf8Length,
  ViewerModel,
  WelcomePayload,
} from "./protocol.js";

export interface ChatEntry {
  from: string;
  text: string;
  own: boolean;
}

export interface IncomingFile {
  manifest: FileManifestPayload;
  from: string;
  received: number;
  state: "receiving" | "awaiting_accept" | "accepted" | "failed";
  reassembly: Reassembly;
  data: Uint8Array | null;
  error?: string;
}

export interface OutgoingFile {
  manifest: FileManifestPayload;
  acked: boolean;
  error?: string;
}

export type SessionEventKind =
  | "status" | "welcome" | "links" | "chat" | "camera" | "command"
  | "file" | "peer_error" | "connect_failed";

export type Listener = (kind: SessionEventKind) => void;

export class UiSession {
  myId: string | null = null;
  status: "connecting" | "connected" | "closed" | "failed" = "connecting";
  policy: Policy = defaultPolicy();
  model: ViewerModel = freshModel();
  links: string[] = [];
  chat: ChatEntry[] = [];
  incoming = new Map<string, IncomingFile>();
  outgoing = new Map<string, OutgoingFile>();
  lastError: ErrorPayload | null = null;
  pendingConnect: string | null = null;

  private seq = 0;
  private coalescer = new Coalescer<"rotation" | "state">(20);
  private pendingKind: "rotation" | "state" | null = null;
  private listeners: Listener[] = [];
  private sendFrame: (text: string) => void;
  private now: () => number;

  constructor(sendFrame: (text: string) => void, now: () => number = () => Date.now()) {
    this.sendFrame = sendFrame;
    this.now = now;
  }

  onChange(listener: Listener): void {
    this.listeners.push(listener);
  }

  private notify(kind: SessionEventKind): void {
    for (const l of this.listeners) l(kind);
  }

  // ------------------------------------------------------------- outbound --

  private emit(kind: Envelope["kind"], payload: Envelope["payload"], to = BROADCAST): void {
    this.seq += 1;
    const envelope: Envelope = {
      kind,
      from: this.myId ?? SERVER_ID,
      to,
      seq: this.seq,
      ts: this.now(),
      payload,
    };
    this.sendFrame(encodeEnvelope(envelope));
  }

  hello(): void {
    this.emit("hello", { policy: this.policy });
  }

  /**
   * Validate and request a link. Returns an error string for locally
   * invalid input (no network call is made); server-side failures arrive
   * later as `connect_failed`.
   */
  connectTo(rawId: string): string | null {
    const target = rawId.trim();
    if (!isPeerId(target)) {
      return "a peer id is exactly 16 letters or digits";
    }
    if (target === this.myId) {
      return "that is your own id";
    }
    this.pendingConnect = target;
    this.emit("connect", { target }, target);
    return null;
  }

  setPolicy(policy: Policy): void {
    this.policy = { ...policy };
    this.notify("status");
  }

  /** Local drag: the viewer follows immediately, the wire frame is throttled. */
  drag(orientation: Quat): void {
    // canonical (wire-grid) form locally too, so sender and receivers agree exactly
    this.model.orientation = canonicalQuat(orientation);
    this.notify("camera");
    this.offerCamera("rotation");
  }

  zoomTo(zoomPercent: number): void {
    this.model.zoom = zoomPercent;
    this.notify("camera");
    this.offerCamera("state");
  }

  private offerCamera(wanted: "rotation" | "state"): void {
    if (this.pendingKind === "state") wanted = "state";
    if (!gateOutbound(wanted, this.policy)) return;
    this.pendingKind = wanted;
    if (this.coalescer.offer(wanted, this.now()) !== null) {
      this.emitCamera(wanted);
    }
  }

  /** Flush a throttled camera frame; the UI calls this on a timer. */
  tick(): void {
    if (this.pendingKind === null) return;
    const due = this.coalescer.poll(this.now());
    if (due !== null) this.emitCamera(this.pendingKind);
  }

  nextDeadlineMs(): number | null {
    return this.pendingKind === null ? null : this.coalescer.nextDeadlineMs();
  }

  private emitCamera(kind: "rotation" | "state"): void {
    this.pendingKind = null;
    if (!gateOutbound(kind, this.policy)) return;
    if (kind === "rotation") {
      const payload: RotationPayload = { q: this.model.orientation, hop: 0 };
      this.emit("rotation", payload);
    } else {
      const payload: StatePayload = {
        q: this.model.orientation,
        zoom: this.model.zoom,
        center: this.model.center,
        hop: 0,
      };
      this.emit("state", payload);
    }
  }

  /** Run a command locally and share it when sending is on. */
  command(script: string): string | null {
    if (utf8Length(script) > MAX_COMMAND_BYTES) {
      return `command too large (limit ${MAX_COMMAND_BYTES} bytes)`;
    }
    this.model.commandLog.push(script);
    this.notify("command");
    if (gateOutbound("command", this.policy)) {
      const payload: CommandPayload = { script, hop: 0 };
      this.emit("command", payload);
    }
    return null;
  }

  sendChat(text: string): void {
    this.chat.push({ from: this.myId ?? "", text, own: true });
    this.notify("chat");
    const payload: ChatPayload = { text };
    this.emit("chat", payload);
  }

  /** Explicit share of a file the user picked; nothing else ever transmits bytes. */
  async sendFile(name: string, data: Uint8Array): Promise<void> {
    const { manifest, chunks } = await chunkFile(name, data);
    this.outgoing.set(manifest.file_id, { manifest, acked: false });
    this.notify("file");
    this.emit("file_manifest", manifest);
    for (const chunk of chunks) this.emit("file_chunk", chunk);
  }

  /** The explicit accept step for a received file. */
  async acceptFile(fileId: string): Promise<Uint8Array | null> {
    const entry = this.incoming.get(fileId);
    if (!entry || entry.state !== "awaiting_accept") return null;
    try {
      const data = await entry.reassembly.finish();
      entry.data = data;
      entry.state = "accepted";
      this.emit("file_ack", { file_id: fileId, ok: true, error: "" }, entry.from);
      this.notify("file");
      return data;
    } catch (err) {
      entry.state = "failed";
      entry.error = String(err);
      this.emit("file_ack", { file_id: fileId, ok: false, error: entry.error }, entry.from);
      this.notify("file");
      return null;
    }
  }

  declineFile(fileId: string): void {
    const entry = this.incoming.get(fileId);
    if (!entry) return;
    this.incoming.delete(fileId);
    this.emit("file_ack", { file_id: fileId, ok: false, error: "declined" }, entry.from);
    this.notify("file");
  }

  // -------------------------------------------------------------- inbound --

  onFrame(text: string): void {
    let envelope: Envelope;
    try {
      envelope = decodeEnvelope(text);
    } catch (err) {
      if (err instanceof DecodeError) return; // count-and-continue territory
      throw err;
    }
    switch (envelope.kind) {
      case "welcome":
        this.myId = (envelope.payload as WelcomePayload).peer_id;
        this.status = "connected";
        this.notify("welcome");
        break;
      case "connect_ok": {
        const peer = (envelope.payload as { peer: string }).peer;
        this.addLink(peer);
        if (this.pendingConnect === peer) this.pendingConnect = null;
        break;
      }
      case "peer_joined":
        this.addLink((envelope.payload as { peer: string }).peer);
        break;
      case "peer_left": {
        const peer = (envelope.payload as { peer: string }).peer;
        this.links = this.links.filter((p) => p !== peer);
        this.notify("links");
        break;
      }
      case "rotation":
      case "state":
        if (applyUpdate(this.model, envelope, this.policy)) this.notify("camera");
        break;
      case "command":
        if (applyUpdate(this.model, envelope, this.policy)) this.notify("command");
        break;
      case "chat":
        this.chat.push({
          from: envelope.from,
          text: (envelope.payload as ChatPayload).text,
          own: false,
        });
        this.notify("chat");
        break;
      case "file_manifest": {
        const manifest = envelope.payload as FileManifestPayload;
        this.incoming.set(manifest.file_id, {
          manifest,
          from: envelope.from,
          received: 0,
          state: manifest.chunk_count === 0 ? "awaiting_accept" : "receiving",
          reassembly: new Reassembly(manifest),
          data: null,
        });
        this.notify("file");
        break;
      }
      case "file_chunk": {
        const chunk = envelope.payload as FileChunkPayload;
        const entry = this.incoming.get(chunk.file_id);
        if (!entry || entry.state === "accepted") break;
        try {
          entry.reassembly.add(chunk);
        } catch (err) {
          entry.state = "failed";
          entry.error = String(err);
          this.notify("file");
          break;
        }
        entry.received = entry.reassembly.receivedCount;
        if (entry.reassembly.complete && entry.state === "receiving") {
          entry.state = "awaiting_accept";
        }
        this.notify("file");
        break;
      }
      case "file_ack": {
        const ack = envelope.payload as FileAckPayload;
        const out = this.outgoing.get(ack.file_id);
        if (out) {
          out.acked = ack.ok;
          if (!ack.ok) out.error = ack.error;
          this.notify("file");
        }
        break;
      }
      case "error": {
        const err = envelope.payload as ErrorPayload;
        this.lastError = err;
        if (this.pendingConnect && (err.code === "peer_not_found" || err.code === "self_connect")) {
          this.pendingConnect = null;
          this.notify("connect_failed");
        } else {
          this.notify("peer_error");
        }
        break;
      }
      default:
        break;
    }
  }

  private addLink(peer: string): void {
    if (!this.links.includes(peer)) {
      this.links.push(peer);
      this.notify("links");
    }
  }

  markClosed(failed: boolean): void {
    this.status = failed ? "failed" : "closed";
    this.notify("status");
  }
}
