/** Dismissible notice store for surfacing service and validation errors. */

export type NoticeLevel = "error" | "info";

export interface Notice {
  id: number;
  level: NoticeLevel;
  message: string;
  retryable: boolean;
}

export class NoticeStore {
  private notices: Notice[] = [];
  private nextId = 1;
  private listeners: Array<(notices: Notice[]) => void> = [];

  add(level: NoticeLevel, message: string, retryable = false): Notice {
    const notice = { id: this.nextId++, level, message, retryable };
    this.notices.push(notice);
    this.emit();
    return notice;
  }

  dismiss(id: number): void {
    this.notices = this.notices.filter((n) => n.id !== id);
    this.emit();
  }

  list(): Notice[] {
    return [...this.notices];
  }

  subscribe(listener: (notices: Notice[]) => void): () => void {
    this.listeners.push(listener);
    listener(this.list());
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.list());
    }
  }
}
